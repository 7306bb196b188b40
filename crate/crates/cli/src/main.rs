fn main() {
    std::process::exit(regnoise_cli::run(std::env::args_os()));
}
