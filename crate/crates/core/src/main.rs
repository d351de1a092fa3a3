fn main() {
    std::process::exit(orthocontour::cli::run_from(std::env::args_os()));
}
