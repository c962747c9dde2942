fn main() {
    std::process::exit(ucmcf::cli::main_with_args(std::env::args_os()));
}
