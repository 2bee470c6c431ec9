fn main() {
    std::process::exit(aina::cli::run(std::env::args_os()));
}
