fn main() {
    std::process::exit(diffvar::cli::run(std::env::args_os()));
}
