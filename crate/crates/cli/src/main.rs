fn main() {
    std::process::exit(detkit_cli::run(std::env::args_os()));
}
