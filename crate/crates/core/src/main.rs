use clap::Parser;
use transop::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
