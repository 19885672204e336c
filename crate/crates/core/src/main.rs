fn main() -> std::process::ExitCode {
    adammcmc::cli::main_with(std::env::args_os())
}
