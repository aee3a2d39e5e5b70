fn main() {
    std::process::exit(nle_cli::run(std::env::args_os()));
}
