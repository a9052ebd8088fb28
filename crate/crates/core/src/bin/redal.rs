fn main() {
    std::process::exit(redal::cli::run(std::env::args_os()));
}
