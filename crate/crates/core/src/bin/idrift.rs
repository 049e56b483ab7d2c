fn main() {
    std::process::exit(idrift::cli::main_with(std::env::args_os()));
}
