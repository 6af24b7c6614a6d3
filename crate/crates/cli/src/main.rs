fn main() {
    std::process::exit(mrp_cli::run(std::env::args_os()));
}
