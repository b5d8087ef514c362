fn main() {
    std::process::exit(tue_cli::run(std::env::args_os()));
}
