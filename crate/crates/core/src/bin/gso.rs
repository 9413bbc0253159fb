fn main() {
    std::process::exit(gradood::cli::main());
}
