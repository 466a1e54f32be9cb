use clap::Parser;
use rses::cli::{configure_threads, run, Cli};
use std::io::Write;

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = configure_threads().and_then(|()| run(&cli, &mut out));
    let _ = out.flush();
    if let Err(e) = result {
        eprintln!("rses: {e}");
        std::process::exit(e.exit_code());
    }
}
