fn main() {
    std::process::exit(cake::cli::run(std::env::args_os()));
}
