fn main() {
    std::process::exit(dfr_core::cli::run_cli(std::env::args_os()));
}
