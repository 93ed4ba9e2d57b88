fn main() {
    std::process::exit(shuttle3d::cli::main_with_args(std::env::args_os()));
}
