use clap::Parser;
use clap::error::ErrorKind;

use memprobe::cli::{Cli, dispatch};

// Exit codes: 0 ok, 1 usage, 2 backend failure, 3 data/schema error.
fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("memprobe: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
