fn main() {
    std::process::exit(cascast::cli::main_with_args(std::env::args_os()));
}
