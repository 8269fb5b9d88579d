fn main() {
    std::process::exit(atnb_cli::run(std::env::args_os()));
}
