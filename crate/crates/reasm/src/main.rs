fn main() {
    std::process::exit(reasm::cli::main_from_args(std::env::args_os()));
}
