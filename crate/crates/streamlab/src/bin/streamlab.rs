fn main() {
    std::process::exit(streamlab::cli::main_with_args(std::env::args_os()));
}
