fn main() {
    std::process::exit(symden_cli::run_cli(std::env::args_os()));
}
