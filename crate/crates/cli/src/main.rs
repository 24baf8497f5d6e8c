fn main() {
    std::process::exit(pathlink_cli::run(std::env::args_os()));
}
