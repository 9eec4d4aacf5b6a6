fn main() {
    std::process::exit(droq_lab::cli::run());
}
