fn main() {
    pami::init_logging();
    std::process::exit(pami::cli::run(std::env::args_os()));
}
