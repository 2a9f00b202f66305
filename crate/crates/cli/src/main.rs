fn main() {
    std::process::exit(horoshear_cli::run(std::env::args_os()));
}
