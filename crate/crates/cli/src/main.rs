fn main() {
    std::process::exit(bubbletower_cli::main_with_args(std::env::args_os()));
}
