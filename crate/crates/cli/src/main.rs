//! `localshare` command line: runs the pipeline, or any prefix of it, from
//! a TOML configuration file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use localshare::pipeline::{self, ArtifactWriter, Dataset, Inputs, RunConfig, RunOptions};
use localshare::synthetic;

#[derive(Debug, Parser)]
#[command(name = "localshare", version, about = "O&D local-share time series and clustering")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every method (or for the generated fixture).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat malformed input rows and non-converged affinity propagation as
    /// errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the inputs and write per-leg local and transfer counts.
    Ingest,
    /// Write quarterly local-share series for every leg.
    Series,
    /// Apply the selection rules and write the clustering series.
    Select,
    /// Run every configured method and write membership documents.
    Cluster,
    /// Score existing membership documents and write metrics.csv.
    Evaluate,
    /// Write metrics and figures from existing membership documents.
    Report,
    /// Full pipeline with a hashed manifest.
    Run,
    /// Write the synthetic fixture inputs into the output directory.
    Fixture,
}

struct Session {
    cfg: RunConfig,
    opts: RunOptions,
}

impl Session {
    fn open(cli: &Cli) -> Result<Self> {
        let Some(path) = &cli.config else {
            bail!("--config is required for this command");
        };
        let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(out) = &cli.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = cli.seed {
            cfg.override_seed(seed);
        }
        Ok(Self {
            cfg,
            opts: RunOptions { strict: cli.strict },
        })
    }

    fn inputs(&self) -> Result<Inputs> {
        let inputs = pipeline::load_inputs(&self.cfg, self.opts)?;
        for (file, rows) in &inputs.skipped {
            eprintln!("warning: skipped {} malformed row(s) in {file}", rows.len());
            for r in rows.iter().take(5) {
                eprintln!("  line {}: {}", r.line, r.reason);
            }
        }
        Ok(inputs)
    }

    fn dataset(&self) -> Result<Dataset> {
        let data = pipeline::build_dataset(&self.inputs()?, &self.cfg)?;
        if !data.dropped.is_empty() {
            eprintln!(
                "note: dropped {} selected pair(s) with an undefined share after aggregation",
                data.dropped.len()
            );
        }
        Ok(data)
    }

    fn writer(&self) -> Result<ArtifactWriter> {
        Ok(ArtifactWriter::new(&self.cfg.out_dir)?)
    }

    fn out(&self, relative: &str) -> PathBuf {
        self.cfg.out_dir.join(relative)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::Fixture = cli.command {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let paths = synthetic::write_fixture(&dir, cli.seed.unwrap_or(7))?;
        for p in paths {
            println!("{}", p.display());
        }
        return Ok(());
    }
    let s = Session::open(cli)?;
    match cli.command {
        Command::Ingest => {
            let inputs = s.inputs()?;
            let bytes = csv_bytes(|b| Ok(inputs.ledger.write_csv(b)?))?;
            s.writer()?.write("ledger.csv", &bytes)?;
            println!(
                "{} itinerary records, {} leg-quarters, {} legs -> {}",
                inputs.market_records,
                inputs.ledger.len(),
                inputs.ledger.legs().len(),
                s.out("ledger.csv").display()
            );
        }
        Command::Series => {
            let inputs = s.inputs()?;
            let all = localshare::shares::build_all_quarterly(&inputs.ledger, s.cfg.span);
            let bytes = csv_bytes(|b| Ok(localshare::shares::write_series_csv(b, all.values())?))?;
            s.writer()?.write("series/all-quarterly.csv", &bytes)?;
            println!("{} legs -> {}", all.len(), s.out("series/all-quarterly.csv").display());
        }
        Command::Select => {
            let data = s.dataset()?;
            let mut out = s.writer()?;
            let list: String = data.selected.iter().map(|k| format!("{k}\n")).collect();
            out.write("selected.txt", list.as_bytes())?;
            pipeline::write_series(&mut out, &data)?;
            println!(
                "{} of {} legs selected, {} kept for clustering ({} points each) -> {}",
                data.selected.len(),
                data.all_quarterly.len(),
                data.keys().len(),
                data.raw.len(),
                s.cfg.out_dir.display()
            );
        }
        Command::Cluster => {
            let data = s.dataset()?;
            let runs = pipeline::cluster_all(&data, &s.cfg, s.opts)?;
            pipeline::write_memberships(&mut s.writer()?, &data, &runs, None)?;
            for r in &runs {
                println!("{}: {} clusters", r.dir(), r.result.k_actual);
            }
        }
        Command::Evaluate | Command::Report => {
            let data = s.dataset()?;
            let runs = pipeline::load_memberships(&s.cfg, &data)?;
            let reports = pipeline::evaluate(&data, &runs, &s.cfg)?;
            let mut out = s.writer()?;
            if let Command::Report = cli.command {
                pipeline::check_highlights(&s.cfg, &data)?;
                pipeline::write_report(&mut out, &data, &runs, &reports, &s.cfg)?;
            } else {
                let rows = pipeline::metrics_rows(&runs, &reports);
                out.write("metrics.csv", pipeline::report::metrics_csv(&rows).as_bytes())?;
            }
            print_file(&s.out("metrics.csv"))?;
        }
        Command::Run => {
            let manifest = pipeline::run(&s.cfg, s.opts)?;
            print_file(&s.out("metrics.csv"))?;
            println!(
                "{} artifacts, manifest at {}",
                manifest.artifacts.len(),
                s.out("manifest.json").display()
            );
        }
        Command::Fixture => unreachable!("handled above"),
    }
    Ok(())
}

fn print_file(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
