fn main() {
    std::process::exit(paradat::cli::run(std::env::args_os()));
}
