fn main() {
    std::process::exit(dpopt::cli::run_cli(std::env::args_os()));
}
