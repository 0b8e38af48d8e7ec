fn main() {
    std::process::exit(fstack_cli::run(std::env::args_os()));
}
