fn main() {
    std::process::exit(orbitemu::cli::main());
}
