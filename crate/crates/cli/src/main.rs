fn main() {
    std::process::exit(mixdist_cli::run(std::env::args_os()));
}
