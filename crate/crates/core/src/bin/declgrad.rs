fn main() {
    std::process::exit(declgrad::cli::main());
}
