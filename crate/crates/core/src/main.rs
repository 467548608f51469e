fn main() {
    std::process::exit(jointpam::cli::main_with_args(std::env::args_os()));
}
