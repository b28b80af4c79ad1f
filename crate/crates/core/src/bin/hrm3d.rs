fn main() {
    std::process::exit(hrm3d::cli::main_with_args(std::env::args_os()));
}
