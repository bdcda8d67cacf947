fn main() {
    std::process::exit(trait_probe::cli::run(std::env::args_os()));
}
