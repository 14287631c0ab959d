fn main() {
    std::process::exit(singulate::cli::run(std::env::args_os()));
}
