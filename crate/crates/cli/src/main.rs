//! `refine check FILE...`: elaborate scripts and print the refined objects.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cicr_core::{run_files, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "refine", version, about = "Refine and check a script of CIC objects")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Elaborate the commands of each FILE in order, in one environment.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print one line per refiner rule application.
        #[arg(long)]
        trace: bool,
        /// Write the trace here instead of standard error.
        #[arg(long, value_name = "FILE")]
        trace_file: Option<PathBuf>,
        /// Disable type propagation in forcing mode.
        #[arg(long)]
        mono: bool,
        /// Enable forcing through beta-redexes.
        #[arg(long)]
        beta: bool,
        /// Print objects with open obligations instead of failing.
        #[arg(long)]
        allow_obligations: bool,
        /// Continue after a failing command.
        #[arg(long)]
        keep_going: bool,
        /// Step budget for reduction and refinement.
        #[arg(long, value_name = "N")]
        max_steps: Option<u64>,
    },
}

fn main() -> ExitCode {
    let Cmd::Check { files, trace, trace_file, mono, beta, allow_obligations, keep_going, max_steps } =
        Cli::parse().cmd;
    let mut srcs = Vec::new();
    for f in &files {
        match fs::read_to_string(f) {
            Ok(s) => srcs.push((f.display().to_string(), s)),
            Err(e) => {
                eprintln!("refine: cannot read {}: {e}", f.display());
                return ExitCode::from(2);
            }
        }
    }
    let opts =
        RunOptions { mono, beta, trace: trace || trace_file.is_some(), allow_obligations, keep_going, max_steps };
    let report = run_files(&srcs, opts);
    print!("{}", report.output);
    if opts.trace {
        let mut text = report.trace.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        match &trace_file {
            Some(p) => {
                if let Err(e) = fs::write(p, text) {
                    eprintln!("refine: cannot write {}: {e}", p.display());
                }
            }
            None => {
                let _ = std::io::stderr().write_all(text.as_bytes());
            }
        }
    }
    ExitCode::from(report.exit as u8)
}
