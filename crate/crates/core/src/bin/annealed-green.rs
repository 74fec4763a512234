fn main() {
    std::process::exit(annealed_green::cli::main_with_args(std::env::args_os()));
}
