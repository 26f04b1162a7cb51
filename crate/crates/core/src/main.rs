fn main() {
    std::process::exit(fesynapse::cli::main_with_args(std::env::args_os()));
}
