fn main() {
    std::process::exit(fourfold::cli::main());
}
