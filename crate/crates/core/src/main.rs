fn main() {
    std::process::exit(parallel_rsa::cli::main(std::env::args_os()));
}
