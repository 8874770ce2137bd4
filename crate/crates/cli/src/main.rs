fn main() {
    std::process::exit(forgetnet_cli::run(std::env::args_os()));
}
