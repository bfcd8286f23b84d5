fn main() {
    std::process::exit(pfvar::cli::run(std::env::args_os()));
}
