use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = udiffse::cli::run(std::env::args().collect(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
