fn main() {
    std::process::exit(mcr::cli::run(std::env::args_os()));
}
