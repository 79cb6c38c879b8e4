fn main() {
    std::process::exit(shadowlab::experiment::cli::run_cli(std::env::args_os()));
}
