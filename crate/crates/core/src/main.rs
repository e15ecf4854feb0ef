fn main() {
    std::process::exit(neural_ricci::cli::run_from(std::env::args_os()));
}
