//! `copt`: generate datasets, train and fine-tune the energy-based solver,
//! evaluate checkpoints, run exact oracles and collect reports.

mod config;
mod report;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use copt_core::dataset::{load_dataset, save_dataset, Dataset, Split};
use copt_core::train::{
    evaluate_complement, evaluate_with, load_checkpoint, save_checkpoint, train_multi, train_single, transfer,
    ProtocolKind, RunRecord, TransferProtocol,
};
use copt_core::{exact_solve, greedy_baseline, Graph, Params, PenaltyWeights, TaskKind};

use config::TrainFlags;
use report::{write_report, CHECKPOINT_FILE, RUN_FILE};

#[derive(Debug, Parser)]
#[command(name = "copt", version, about = "Unsupervised GNN solver for combinatorial optimization on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Ba,
    Er,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random graph dataset
    Gen {
        #[arg(long, value_enum, default_value = "ba")]
        model: Model,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 60)]
        nodes: usize,
        /// Edges per new node (BA)
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Edge probability (ER)
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert DIMACS or JSONL graph files into one dataset
    Import {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single-task model from scratch
    Train {
        #[arg(long)]
        task: Option<TaskKind>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Train one shared backbone on several tasks
    TrainMulti {
        /// Comma-separated tasks, e.g. mds,mis,coloring:10
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<TaskKind>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Fine-tune a checkpoint on a target task
    Transfer {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Target task
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        /// Head of the checkpoint to start from
        #[arg(long)]
        source_task: Option<TaskKind>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Decode a dataset with a checkpoint and print metrics as JSON
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        data: PathBuf,
        /// Decoder seeds
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Evaluate a head trained through the complement reduction; the
        /// value is the task solved on the complement graph
        #[arg(long)]
        complement_of: Option<TaskKind>,
        #[arg(long, default_value_t = 1.0)]
        penalty_a: f64,
        #[arg(long, default_value_t = 2.0)]
        penalty_b: f64,
    },
    /// Exact optimum (or greedy baseline) per graph, as CSV on stdout
    Oracle {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        greedy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize run directories into CSV tables
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        #[arg(long, default_value = "curves.csv")]
        curves: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("COPT_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("COPT_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("COPT_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { model, count, nodes, m, p, seed, out } => {
            let d = match model {
                Model::Ba => Dataset::barabasi_albert(count, nodes, m, seed, Split::Train)?,
                Model::Er => Dataset::erdos_renyi(count, nodes, p, seed, Split::Train)?,
            };
            save_dataset(&d, &out)?;
            eprintln!("wrote {} graphs to {}", d.len(), out.display());
        }
        Command::Import { inputs, out } => {
            let mut graphs = Vec::new();
            for path in &inputs {
                graphs.extend(import_file(path)?);
            }
            let d = Dataset::new(graphs, Split::Train)?;
            save_dataset(&d, &out)?;
            eprintln!("wrote {} graphs to {}", d.len(), out.display());
        }
        Command::Train { task, flags } => {
            let r = flags.resolve()?;
            let task = task.or(r.file.task).context("no task: pass --task or set `task` in the config")?;
            let (train, val) = load_pair(&r.data, r.val.as_deref())?;
            let (params, rec) = train_single(&r.train, &train, val.as_ref(), task)?;
            write_run(&r.out, &params, &rec)?;
        }
        Command::TrainMulti { tasks, flags } => {
            let r = flags.resolve()?;
            let tasks = if tasks.is_empty() { r.file.tasks.clone().unwrap_or_default() } else { tasks };
            let (train, val) = load_pair(&r.data, r.val.as_deref())?;
            let (params, rec) = train_multi(&r.train, &train, val.as_ref(), &tasks)?;
            write_run(&r.out, &params, &rec)?;
        }
        Command::Transfer { ckpt, task, protocol, source_task, flags } => {
            let r = flags.resolve()?;
            let ckpt = ckpt.or(r.file.ckpt.clone()).context("no checkpoint: pass --ckpt")?;
            let target = task.or(r.file.task).context("no target task: pass --task")?;
            let kind = protocol.or(r.file.protocol).context("no protocol: pass --protocol")?;
            let source = load_checkpoint(&ckpt)?;
            let mut cfg = r.train.clone();
            // the checkpoint fixes the architecture
            cfg.arch = source.arch;
            let proto = TransferProtocol { kind, target, source: source_task.or(r.file.source_task) };
            let (train, val) = load_pair(&r.data, r.val.as_deref())?;
            let (params, rec) = transfer(&cfg, &source, &proto, &train, val.as_ref())?;
            write_run(&r.out, &params, &rec)?;
        }
        Command::Eval { ckpt, task, data, k, complement_of, penalty_a, penalty_b } => {
            let params = load_checkpoint(&ckpt)?;
            let d = load_dataset(&data, Split::Test)?;
            let m = match complement_of {
                Some(solved_as) => evaluate_complement(&params, &d, task, solved_as, k)?,
                None => evaluate_with(&params, &d, task, k, PenaltyWeights::new(penalty_a, penalty_b)?)?,
            };
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Oracle { task, data, greedy, seed } => {
            let d = load_dataset(&data, Split::Test)?;
            let stdout = std::io::stdout();
            let mut w = csv::Writer::from_writer(stdout.lock());
            w.write_record(["graph", "nodes", "edges", "optimum"])?;
            for (i, g) in d.graphs.iter().enumerate() {
                let r = if greedy { greedy_baseline(task, g, seed)? } else { exact_solve(task, g)? };
                w.write_record([i.to_string(), g.num_nodes().to_string(), g.num_edges().to_string(), r.optimum.to_string()])?;
            }
            w.flush()?;
        }
        Command::Report { runs, out, curves } => {
            let n = write_report(&runs, &out, &curves)?;
            eprintln!("summarized {n} of {} runs into {} and {}", runs.len(), out.display(), curves.display());
        }
    }
    Ok(())
}

fn load_pair(data: &Path, val: Option<&Path>) -> Result<(Dataset, Option<Dataset>)> {
    let train = load_dataset(data, Split::Train)?;
    let val = val.map(|p| load_dataset(p, Split::Val)).transpose()?;
    Ok((train, val))
}

fn write_run(dir: &Path, params: &Params, rec: &RunRecord) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut f = fs::File::create(dir.join(RUN_FILE))?;
    f.write_all(serde_json::to_string_pretty(rec)?.as_bytes())?;
    f.write_all(b"\n")?;
    save_checkpoint(params, dir.join(CHECKPOINT_FILE))?;
    for (task, m) in &rec.final_metrics {
        eprintln!("{task}: {:.3} ± {:.3} over {} graphs", m.mean_objective, m.std_objective, m.graphs);
    }
    Ok(())
}

/// DIMACS (`p edge N M` / `e u v`, 1-based) files hold one graph; anything
/// else is read as a JSONL dataset.
fn import_file(path: &Path) -> Result<Vec<Graph>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines().peekable();
    let mut first = None;
    while let Some(line) = lines.peek() {
        match line {
            Ok(l) if l.trim().is_empty() => {
                lines.next();
            }
            Ok(l) => {
                first = Some(l.trim_start().to_string());
                break;
            }
            Err(_) => break,
        }
    }
    let is_dimacs = first.is_some_and(|l| l.starts_with('c') || l.starts_with("p "));
    if !is_dimacs {
        return Ok(load_dataset(path, Split::Train)?.graphs);
    }
    let mut n = None;
    let mut edges = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let at = || format!("{}:{}", path.display(), i + 1);
        match parts.first().copied() {
            None | Some("c") => {}
            Some("p") => {
                let count = parts.get(2).and_then(|s| s.parse::<usize>().ok());
                n = Some(count.with_context(|| format!("{}: malformed problem line", at()))?);
            }
            Some("e") => {
                let u = parts.get(1).and_then(|s| s.parse::<usize>().ok());
                let v = parts.get(2).and_then(|s| s.parse::<usize>().ok());
                match (u, v) {
                    (Some(u), Some(v)) if u >= 1 && v >= 1 => edges.push((u - 1, v - 1)),
                    _ => bail!("{}: malformed edge line", at()),
                }
            }
            Some(other) => bail!("{}: unexpected line type {other:?}", at()),
        }
    }
    let n = n.with_context(|| format!("{}: missing `p edge` line", path.display()))?;
    Ok(vec![Graph::new(n, edges).with_context(|| path.display().to_string())?])
}
