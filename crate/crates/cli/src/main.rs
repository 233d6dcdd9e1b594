fn main() {
    std::process::exit(rigidstyle_cli::run(std::env::args_os()));
}
