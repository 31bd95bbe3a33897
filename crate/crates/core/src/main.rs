fn main() {
    std::process::exit(eed_core::cli::run(std::env::args_os()));
}
