fn main() {
    std::process::exit(gmle_core::cli::main_with_args(std::env::args_os()));
}
