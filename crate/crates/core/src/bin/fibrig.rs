fn main() {
    std::process::exit(fibrig::cli::main());
}
