fn main() {
    std::process::exit(tracklearn_cli::run());
}
