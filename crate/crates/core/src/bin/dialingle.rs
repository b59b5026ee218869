fn main() {
    std::process::exit(dialingle::cli::run());
}
