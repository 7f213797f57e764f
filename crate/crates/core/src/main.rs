fn main() {
    std::process::exit(psido_lab::cli::main_with_args(std::env::args_os()));
}
