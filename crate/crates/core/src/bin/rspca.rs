fn main() {
    std::process::exit(rspca::cli::run(std::env::args_os()));
}
