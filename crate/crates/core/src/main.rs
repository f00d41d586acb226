fn main() -> std::process::ExitCode {
    aligned_xai::cli::main_with_args(std::env::args_os())
}
