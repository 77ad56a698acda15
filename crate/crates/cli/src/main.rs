fn main() {
    std::process::exit(orchestrion_cli::run(std::env::args_os()));
}
