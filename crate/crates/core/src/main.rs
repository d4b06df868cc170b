fn main() {
    std::process::exit(switchsos::cli::run(std::env::args_os()));
}
