fn main() {
    std::process::exit(cwhom::cli::main_with_args(std::env::args_os()));
}
