use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(lpv_cli::run(std::env::args_os()))
}
