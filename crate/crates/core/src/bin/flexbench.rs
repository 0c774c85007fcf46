fn main() {
    std::process::exit(flexbench::cli::run(std::env::args_os()));
}
