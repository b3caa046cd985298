fn main() {
    std::process::exit(fockmps::cli::run(std::env::args_os()));
}
