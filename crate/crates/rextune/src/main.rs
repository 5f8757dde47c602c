fn main() {
    std::process::exit(rextune::cli::run(std::env::args_os()));
}
