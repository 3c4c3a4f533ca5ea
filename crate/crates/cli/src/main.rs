use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(polyfund_cli::run(std::env::args_os()))
}
