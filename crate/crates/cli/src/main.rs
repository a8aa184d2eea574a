fn main() {
    std::process::exit(ludus_cli::main_with_args(std::env::args_os()));
}
