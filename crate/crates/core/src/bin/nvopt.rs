fn main() {
    std::process::exit(nvopt::cli::run(std::env::args_os()));
}
