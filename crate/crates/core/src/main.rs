fn main() {
    std::process::exit(tse_core::cli::run(std::env::args_os()));
}
