fn main() {
    std::process::exit(histwave::cli::run(std::env::args_os()));
}
