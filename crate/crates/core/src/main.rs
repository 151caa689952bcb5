fn main() {
    std::process::exit(foldtree::cli::main());
}
