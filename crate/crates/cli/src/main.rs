fn main() {
    std::process::exit(transmedia_cli::run(std::env::args_os()));
}
