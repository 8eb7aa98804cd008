fn main() {
    std::process::exit(fcbm_cli::run(std::env::args_os()));
}
