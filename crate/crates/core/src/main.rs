fn main() {
    std::process::exit(bugdedup::cli::main_with_args(std::env::args_os()));
}
