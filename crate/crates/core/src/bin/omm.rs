fn main() {
    std::process::exit(omm::cli::main_with_args(std::env::args_os()));
}
