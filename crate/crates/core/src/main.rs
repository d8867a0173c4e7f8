fn main() {
    std::process::exit(ailimit::cli::run());
}
