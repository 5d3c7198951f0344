fn main() {
    std::process::exit(smoothrot::cli::main());
}
