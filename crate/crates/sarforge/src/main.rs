fn main() {
    std::process::exit(sarforge::cli::run(std::env::args_os()));
}
