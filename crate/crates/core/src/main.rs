fn main() {
    std::process::exit(stress_release::cli::run(std::env::args_os()));
}
