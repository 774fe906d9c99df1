fn main() {
    std::process::exit(qgrad::cli::main());
}
