fn main() {
    std::process::exit(hfscreen::cli::run());
}
