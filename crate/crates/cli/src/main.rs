fn main() {
    std::process::exit(vrjp_cli::run(std::env::args_os()));
}
