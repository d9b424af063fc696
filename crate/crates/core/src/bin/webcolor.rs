fn main() {
    std::process::exit(webcolor::cli::run(std::env::args_os()));
}
