fn main() {
    std::process::exit(procure::cli::main());
}
