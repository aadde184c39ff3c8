fn main() {
    std::process::exit(musefm_cli::run(std::env::args_os()));
}
