use clap::Parser;

use pipe::cli::{diagnostic, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", diagnostic(&e));
        std::process::exit(e.exit_code());
    }
}
