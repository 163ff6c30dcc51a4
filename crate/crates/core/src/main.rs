use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use prada::config::ConfigFile;
use prada::experiment::{run_experiment, ExperimentName, ExperimentSpec};
use prada::node::Reply;
use prada::recovery::ClusterSnapshot;
use prada::sim::Cluster;
use prada::{parse, ClientId};

#[derive(Parser)]
#[command(name = "prada", version, about = "Policy-aware key-value store simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SeedArg {
    /// Master seed.
    #[arg(long, env = "PRADA_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute statements against a simulated cluster.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// File with one statement per line; `--` starts a comment line.
        #[arg(long, conflicts_with = "statement")]
        statements: Option<PathBuf>,
        /// Inline statements.
        statement: Vec<String>,
        #[command(flatten)]
        seed: SeedArg,
        /// Directory for the timing CSV and the final snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit 0 even when a statement fails.
        #[arg(long)]
        keep_going: bool,
    },
    /// Run a built-in experiment and write per-run and aggregate CSVs.
    Experiment {
        #[arg(long, value_enum)]
        experiment: Option<ExperimentName>,
        /// Experiment spec JSON; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<u32>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Ten times the default insert counts.
        #[arg(long)]
        full_scale: bool,
    },
    /// Scan snapshots of a quiescent run for dangling, unreferenced and
    /// non-compliant items.
    Check {
        /// Directory of snapshot JSON files, or a single file.
        snapshots: PathBuf,
    },
}

#[derive(Serialize)]
struct Timing {
    line: usize,
    kind: &'static str,
    coordinator: u32,
    attempts: u32,
    qct_ms: f64,
    reply: &'static str,
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { config, statements, statement, seed, out, keep_going } => {
            let file = ConfigFile::load(&config)?;
            let text = match statements {
                Some(p) => std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                None => statement.join("\n"),
            };
            cmd_run(&file, &text, seed.seed, out.as_deref(), keep_going)
        }
        Cmd::Experiment { experiment, config, repeats, seed, out, full_scale } => {
            let mut spec = match config {
                Some(p) => {
                    let doc = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<ExperimentSpec>(&doc).context("experiment spec")?
                }
                None => {
                    let Some(name) = experiment else { bail!("--experiment or --config is required") };
                    ExperimentSpec::new(name, 10, seed.seed)
                }
            };
            if let Some(name) = experiment {
                spec.name = name;
            }
            if let Some(r) = repeats {
                spec.repeats = r;
            }
            spec.full_scale |= full_scale;
            let result = run_experiment(&spec)?;
            result.write(&out, spec.name.as_str())?;
            let mut out = std::io::stdout().lock();
            for a in &result.aggregate {
                let line = writeln!(
                    out,
                    "{} {} {} {} mean={:.6e} ci99={:.3e} n={}",
                    a.experiment, a.series, a.point, a.metric, a.mean, a.ci99, a.n
                );
                // a closed pipe (e.g. `| head`) is not an error
                if line.is_err() {
                    break;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { snapshots } => cmd_check(&snapshots),
    }
}

fn cmd_run(file: &ConfigFile, text: &str, seed: u64, out: Option<&Path>, keep_going: bool) -> Result<ExitCode> {
    let registry = file.registry()?;
    let mut stmts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        match parse(line, &registry) {
            Ok(s) => stmts.push((i + 1, s)),
            Err(e) => bail!("line {}: {e}", i + 1),
        }
    }
    let mut cluster = Cluster::new(file.cluster_config()?, seed)?;
    cluster.run_until_quiescent(prada::SimTime::from_secs_f64(60.0));
    let mut timings = Vec::new();
    let mut failed = false;
    for (line, stmt) in stmts {
        let at = cluster.now();
        cluster.submit(at, ClientId(0), stmt, None);
        if !cluster.run_until_quiescent(at + Duration::from_secs(3600)) {
            bail!("line {line}: cluster did not settle");
        }
        let rec = cluster.records().last().cloned().context("no reply recorded")?;
        let qct = rec.qct().as_secs_f64() * 1e3;
        match &rec.reply {
            Reply::Ok { item: Some(item), .. } => {
                let cols: Vec<String> = item
                    .columns
                    .iter()
                    .map(|(k, v)| format!("{k}={}", String::from_utf8_lossy(v)))
                    .collect();
                println!("line {line}: ok [{}] dhr={} ({qct:.1} ms)", cols.join(", "), item.dhr);
            }
            r => println!("line {line}: {} ({qct:.1} ms)", r.label()),
        }
        failed |= !matches!(rec.reply, Reply::Ok { .. });
        timings.push(Timing {
            line,
            kind: rec.kind.as_str(),
            coordinator: rec.coordinator.0,
            attempts: rec.attempts,
            qct_ms: qct,
            reply: rec.reply.label(),
        });
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        prada::experiment::write_csv(&dir.join("timings.csv"), &timings)?;
        let snap = serde_json::to_string_pretty(&cluster.snapshot())?;
        std::fs::write(dir.join("snapshot.json"), snap)?;
    }
    Ok(if failed && !keep_going { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_check(path: &Path) -> Result<ExitCode> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        v.retain(|p| p.extension().is_some_and(|e| e == "json"));
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        bail!("no snapshot files in {}", path.display());
    }
    let mut total = 0;
    for f in files {
        let doc = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        let snap: ClusterSnapshot = serde_json::from_str(&doc).with_context(|| format!("parsing {}", f.display()))?;
        let violations = snap.scan()?;
        for v in &violations {
            println!("{}: {v}", f.display());
        }
        total += violations.len();
    }
    println!("{total} violation(s)");
    Ok(if total == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
