use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(courtside::cli::run(std::env::args_os()))
}
