fn main() {
    std::process::exit(pointjig::cli::run(std::env::args_os()));
}
