fn main() {
    std::process::exit(autopar_cli::run(std::env::args_os()));
}
