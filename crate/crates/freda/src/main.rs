fn main() {
    std::process::exit(freda::cli::main_with_args(std::env::args_os()));
}
