use clap::Parser;

use currstat_cli::{error_dir, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            let doc = e.to_json();
            eprintln!("{doc}");
            if let Some(dir) = error_dir(&cli).filter(|d| d.is_dir()) {
                let _ = std::fs::write(dir.join("error.json"), format!("{doc}\n"));
            }
            std::process::exit(e.exit_code());
        }
    }
}
