fn main() {
    std::process::exit(graphgp::cli::run(std::env::args_os()));
}
