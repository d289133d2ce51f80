fn main() {
    std::process::exit(mcfusion::cli::main_with_args(std::env::args_os()));
}
