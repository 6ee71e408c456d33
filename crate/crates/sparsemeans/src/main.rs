fn main() {
    std::process::exit(sparsemeans::cli::main());
}
