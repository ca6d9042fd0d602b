fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(iadmm_sim::cli::run_cli(std::env::args_os()))
}
