fn main() {
    std::process::exit(tagtrans::cli::run(std::env::args_os()));
}
