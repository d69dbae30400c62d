fn main() {
    std::process::exit(dlcq_scatter::cli::main());
}
