fn main() {
    std::process::exit(treedefrag::cli::run());
}
