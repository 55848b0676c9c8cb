fn main() {
    std::process::exit(srqr_cli::run(std::env::args_os()));
}
