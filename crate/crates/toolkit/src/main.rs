fn main() {
    std::process::exit(plane2depth_toolkit::cli::main_with_args(std::env::args_os()));
}
