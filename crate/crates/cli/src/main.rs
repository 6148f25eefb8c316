fn main() {
    std::process::exit(faithbench_cli::run(std::env::args_os()));
}
