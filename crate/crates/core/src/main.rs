fn main() {
    std::process::exit(hfntt::cli::main_with(std::env::args_os()));
}
