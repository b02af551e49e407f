fn main() {
    std::process::exit(fracmorse_cli::run(std::env::args_os()));
}
