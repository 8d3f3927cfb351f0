use std::process::ExitCode;

use sobolev_fem_cli::{parse_args, run};

fn main() -> ExitCode {
    match parse_args(std::env::args_os()).and_then(|config| run(&config)) {
        Ok(out) => {
            print!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().trim_end());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
