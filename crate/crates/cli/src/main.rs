use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weakstrong::datasets::{
    generate_hard_instance, generate_sbm, write_matrix, write_points_csv, HardInstanceSpec, SbmSpec,
};
use weakstrong::harness::{
    baseline_cost, emit_plot, read_records_file, run_algorithm, run_sweep, workers_from_env, write_records, Algo,
    DatasetSource, KCenterRow, KMeansRow, RunConfig, SweepSpec, WeakMode, WeakSource,
};
use weakstrong::kcenter::SearchMode;
use weakstrong::metric::DistanceMatrix;
use weakstrong::{with_workers, Error, Metric};

/// Clustering with weak and strong distance oracles.
#[derive(Parser, Debug)]
#[command(name = "weakstrong", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run one algorithm once and print its CSV row.
    Run(RunArgs),
    /// Run a sweep described by a key = value config file.
    Sweep {
        config: PathBuf,
        /// Records CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot a records CSV as SVG.
    Plot {
        csv: PathBuf,
        /// SVG destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// Gaussian blobs, written as a points CSV.
    Sbm {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 1e5)]
        mu_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-level distance matrix, written as a matrix file.
    Hard {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        l: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    algo: String,
    /// sbm, hard, points or matrix.
    #[arg(long, default_value = "sbm")]
    dataset: String,
    /// Input file for `points` and `matrix` datasets.
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: usize,
    /// Generator cluster count; defaults to `k`.
    #[arg(long)]
    k_true: Option<usize>,
    #[arg(long, default_value_t = 1e5)]
    mu_scale: f64,
    #[arg(long)]
    l: Option<f64>,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// uniform-range, label-swap or matrix.
    #[arg(long, default_value = "uniform-range")]
    corruption: String,
    #[arg(long, default_value_t = 1)]
    oracle_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Budget constant; see the sweep documentation.
    #[arg(long)]
    constant: Option<f64>,
    /// Defaults to the algorithm's own ball constant.
    #[arg(long)]
    c_ball: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    c_sample: f64,
    #[arg(long, default_value = "binary")]
    search_mode: String,
    #[arg(long)]
    strong_budget: Option<u64>,
    /// Omit the CSV header line.
    #[arg(long)]
    no_header: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn dataset_source(a: &RunArgs) -> Result<DatasetSource, Error> {
    let need_n = || a.n.ok_or_else(|| Error::Config(format!("dataset {} needs --n", a.dataset)));
    let need_path = || a.path.clone().ok_or_else(|| Error::Config(format!("dataset {} needs --path", a.dataset)));
    let k_true = a.k_true.unwrap_or(a.k);
    Ok(match a.dataset.as_str() {
        "sbm" => {
            let mut s = SbmSpec::new(need_n()?, k_true, a.data_seed);
            s.mu_scale = a.mu_scale;
            DatasetSource::Sbm(s)
        }
        "hard" => {
            let mut h = HardInstanceSpec::new(need_n()?, k_true, a.data_seed);
            if let Some(l) = a.l {
                h.l = l;
            }
            DatasetSource::Hard(h)
        }
        "points" => DatasetSource::Points(need_path()?),
        "matrix" => DatasetSource::Matrix(need_path()?),
        other => return Err(Error::Config(format!("unknown dataset {other:?}"))),
    })
}

fn run_one(a: &RunArgs) -> Result<(), Error> {
    let algo: Algo = a.algo.parse()?;
    let metric: Metric = dataset_source(a)?.build()?;
    let mode: WeakMode = a.corruption.parse()?;
    let weak = WeakSource::new(&metric, mode, a.delta, a.oracle_seed)?;
    let mut cfg = RunConfig::new(algo, a.k, a.delta, a.seed);
    cfg.epsilon = a.eps;
    cfg.constant = a.constant;
    if let Some(c) = a.c_ball {
        cfg.c_ball = c;
    }
    cfg.c_sample = a.c_sample;
    cfg.search_mode = a.search_mode.parse::<SearchMode>()?;
    cfg.strong_budget = a.strong_budget;

    let out = run_algorithm(&metric, &weak, &cfg);
    let base = baseline_cost(&metric, algo, a.k, None, a.seed).ok();
    let n = metric.n();
    let (header, row) = if algo.is_kmeans() {
        (KMeansRow::HEADER, KMeansRow::new(n, &cfg, &out, base).to_csv())
    } else {
        (KCenterRow::HEADER, KCenterRow::new(n, &cfg, &out, base).to_csv())
    };
    let mut stdout = io::stdout().lock();
    if !a.no_header {
        writeln!(stdout, "{header}")?;
    }
    writeln!(stdout, "{row}")?;
    if let Some(kind) = out.status.strip_prefix("error:") {
        return Err(Error::Precondition(format!("run failed ({kind})")));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { kind: GenKind::Sbm { n, k, dim, mu_scale, seed, out } } => {
            let mut spec = SbmSpec::new(n, k, seed);
            spec.dim = dim.unwrap_or(k);
            spec.mu_scale = mu_scale;
            write_points_csv(&generate_sbm(&spec)?, &out)
        }
        Command::Gen { kind: GenKind::Hard { n, k, l, out } } => {
            let mut spec = HardInstanceSpec::new(n, k, 0);
            if let Some(l) = l {
                spec.l = l;
            }
            let matrix: DistanceMatrix = match generate_hard_instance(&spec)? {
                Metric::Matrix(m) => (*m).clone(),
                Metric::Euclidean(_) => unreachable!("hard instances are matrix-backed"),
            };
            write_matrix(&matrix, &out)
        }
        Command::Run(args) => run_one(&args),
        Command::Sweep { config, out } => {
            let spec = SweepSpec::from_file(&config)?;
            let report = run_sweep(&spec)?;
            match &out {
                Some(p) => {
                    let mut w = create(p)?;
                    write_records(&report.records, &mut w)?;
                    w.flush()?;
                    print!("{}", report.summary_table());
                }
                None => {
                    write_records(&report.records, io::stdout().lock())?;
                    eprint!("{}", report.summary_table());
                }
            }
            Ok(())
        }
        Command::Plot { csv, out } => {
            let svg = emit_plot(&read_records_file(&csv)?)?;
            match out {
                Some(p) => {
                    let mut w = create(&p)?;
                    w.write_all(svg.as_bytes())?;
                    w.flush()?;
                }
                None => io::stdout().lock().write_all(svg.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn fail(kind: &str, msg: &str) -> ExitCode {
    eprintln!("error kind={kind} msg={msg:?}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    let workers = match workers_from_env() {
        Ok(w) => w,
        Err(e) => return fail(e.kind(), &e.to_string()),
    };
    match with_workers(workers, || execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
