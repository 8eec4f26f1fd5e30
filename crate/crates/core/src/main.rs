fn main() {
    std::process::exit(fse::cli::main_with_args(std::env::args_os()));
}
