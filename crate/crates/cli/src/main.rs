use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use papernest::fixtures::{write_fixture, FIXTURES};
use papernest::layout::Paper;
use papernest::pipeline::{run_path, validate, PipelineError, RunOptions, RunReport};

const EXIT_STAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;

/// Nested papercraft models from layered meshes.
#[derive(Debug, Parser)]
#[command(name = "papernest", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage and write sheets, meshes and report.json.
    Run {
        config: PathBuf,
        /// Output root; files go to `<out>/<model>/`.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config paper size.
        #[arg(long, value_parser = parse_paper)]
        paper: Option<Paper>,
    },
    /// Check a config without touching geometry.
    Validate { config: PathBuf },
    /// Write a built-in synthetic model and its config.
    Fixture {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(FIXTURES))]
        name: String,
        dir: PathBuf,
    },
}

fn parse_paper(s: &str) -> Result<Paper, String> {
    match s.to_ascii_lowercase().as_str() {
        "a4" => Ok(Paper::A4),
        "a3" => Ok(Paper::A3),
        _ => Err(format!("unknown paper size `{s}` (expected a4 or a3)")),
    }
}

fn summary(r: &RunReport, out: &std::path::Path) {
    println!(
        "{}: {} patches on {} {:?} pages at {:.3} mm/unit, seed {}",
        r.model,
        r.patches.len(),
        r.pages,
        r.paper,
        r.scale_mm_per_unit,
        r.seed
    );
    for l in &r.levels {
        println!("  level {}: view rank {} entropy {:.4}, {} rejected", l.label, l.rank, l.entropy, l.rejections.len());
    }
    for p in &r.patches {
        println!("  patch {}: {} faces, {} tabs, page {}", p.label, p.faces, p.tabs, p.page);
    }
    let s = &r.stability;
    println!("  stability: simulated {}, static {}", s.final_stable, s.static_stable);
    for t in &r.stages {
        println!("  {:<12} {:>8.3} s", t.stage.name(), t.seconds);
    }
    println!("wrote {} files to {}", r.outputs.len(), out.join(&r.model).display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} workers: {e}");
            return ExitCode::from(EXIT_STAGE);
        }
    }
    match cli.command {
        Command::Run { config, out, seed, paper } => match run_path(&config, &RunOptions { out_dir: out.clone(), seed, paper }) {
            Ok(r) => {
                summary(&r, &out);
                ExitCode::SUCCESS
            }
            Err(PipelineError::Invalid(diags)) => {
                for d in diags {
                    eprintln!("invalid: {d}");
                }
                ExitCode::from(EXIT_INVALID)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_STAGE)
            }
        },
        Command::Validate { config } => {
            let diags = validate(&config);
            if diags.is_empty() {
                println!("{}: ok", config.display());
                return ExitCode::SUCCESS;
            }
            for d in &diags {
                eprintln!("invalid: {d}");
            }
            ExitCode::from(EXIT_INVALID)
        }
        Command::Fixture { name, dir } => match write_fixture(&name, &dir) {
            Ok(path) => {
                println!("{}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_STAGE)
            }
        },
    }
}
