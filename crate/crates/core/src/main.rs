fn main() {
    std::process::exit(ncdiff::cli::main_with_args(std::env::args_os()));
}
