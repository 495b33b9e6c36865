fn main() {
    std::process::exit(vocalconf::cli::run(std::env::args_os()));
}
