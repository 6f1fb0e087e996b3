fn main() {
    std::process::exit(nnkm::cli::main_with(std::env::args_os()));
}
