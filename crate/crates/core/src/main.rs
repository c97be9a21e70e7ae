fn main() {
    std::process::exit(censorbounds::cli::run(std::env::args_os()));
}
