fn main() {
    std::process::exit(betree::cli::main());
}
