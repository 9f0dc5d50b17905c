fn main() {
    std::process::exit(oscguard_cli::main_with_args(std::env::args_os()));
}
