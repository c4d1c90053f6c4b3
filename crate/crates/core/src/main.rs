fn main() {
    std::process::exit(rubikroute::cli::run(std::env::args_os()));
}
