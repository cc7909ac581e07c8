fn main() {
    std::process::exit(homcascade::cli::main_from_args(std::env::args_os()));
}
