fn main() {
    std::process::exit(beamsculpt::cli::run(std::env::args_os()));
}
