fn main() {
    std::process::exit(ldpc_dfr::cli::run(std::env::args().collect()));
}
