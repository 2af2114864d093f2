fn main() {
    std::process::exit(gwmlp::cli::run(std::env::args_os()));
}
