fn main() {
    std::process::exit(tmwr_cli::run(std::env::args_os()));
}
