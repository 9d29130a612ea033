fn main() {
    std::process::exit(mpijr::cli::run(std::env::args_os()));
}
