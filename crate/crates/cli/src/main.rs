use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dualcal::run(std::env::args_os()))
}
