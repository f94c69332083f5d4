fn main() {
    std::process::exit(ridc::harness::cli::run(std::env::args_os()));
}
