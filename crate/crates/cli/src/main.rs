use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(chaoslab_cli::run(std::env::args_os()))
}
