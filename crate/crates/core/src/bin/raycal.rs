fn main() {
    std::process::exit(raycal::cli::run(std::env::args_os()));
}
