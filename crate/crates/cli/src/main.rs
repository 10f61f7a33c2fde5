fn main() {
    std::process::exit(mabuchi_cli::run_command(std::env::args_os()));
}
