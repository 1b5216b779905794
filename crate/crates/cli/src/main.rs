fn main() {
    std::process::exit(spatpomp_cli::main_with_args(std::env::args_os()));
}
