fn main() {
    std::process::exit(rerankit::cli::main());
}
