fn main() {
    std::process::exit(citss_cli::run(std::env::args_os()));
}
