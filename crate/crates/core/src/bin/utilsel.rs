fn main() {
    std::process::exit(utilsel::cli::main_from(std::env::args_os()));
}
