use clap::Parser;

use walkcut::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    let result = cli::resolve(args).and_then(|p| cli::run(&p));
    match result {
        Ok(outcome) => {
            println!("{} -> {}", outcome.summary, outcome.out_dir.display());
            if !outcome.passed {
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("{}", cli::error_json(&e));
            std::process::exit(cli::exit_code(&e));
        }
    }
}
