fn main() {
    std::process::exit(calibdr::cli::run(std::env::args_os()));
}
