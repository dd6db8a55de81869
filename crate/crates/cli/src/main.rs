fn main() {
    std::process::exit(adaptive_sde_cli::run_cli(std::env::args_os()));
}
