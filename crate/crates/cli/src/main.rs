use std::process::ExitCode;

use clap::Parser;
use ctxexp::{execute, Cli, Outcome};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    match execute(&cli) {
        Ok(Outcome::Written { dir, manifest }) => {
            println!(
                "{}: {} files written to {} ({} warnings)",
                manifest.command,
                manifest.outputs.len(),
                dir.display(),
                manifest.warning_count()
            );
            ExitCode::SUCCESS
        }
        Ok(Outcome::Validated(report)) => {
            for f in &report.files {
                if f.findings.is_empty() {
                    println!("ok {} ({} rows)", f.path, f.rows);
                }
                for msg in &f.findings {
                    println!("finding {msg}");
                }
            }
            if report.is_clean() {
                ExitCode::SUCCESS
            } else {
                println!("{} findings", report.finding_count());
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
