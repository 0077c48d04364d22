fn main() {
    std::process::exit(frontier_cli::run(std::env::args_os()));
}
