fn main() {
    std::process::exit(sifbm::cli::main());
}
