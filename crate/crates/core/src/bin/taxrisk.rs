fn main() -> std::process::ExitCode {
    taxrisk::cli::main_with_args(std::env::args_os())
}
