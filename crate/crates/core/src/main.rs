fn main() {
    std::process::exit(bicl::cli::main_with_args(std::env::args_os()));
}
