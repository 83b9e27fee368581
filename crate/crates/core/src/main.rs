use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use ecf_ica::campaign::run_campaign;
use ecf_ica::fastica::{run_fastica, FasticaConfig};
use ecf_ica::{
    amari_error, fit_whitening, gain_matrix, make_dataset, tabulate_score, DataMatrix, Error, Exec,
    ExperimentConfig, Nonlinearity, NonlinearityKind, Result, Scenario, SourceFamily,
};

#[derive(Parser)]
#[command(
    name = "ecf-ica",
    version,
    about = "FastICA with fixed or learned score nonlinearities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separate one dataset with one nonlinearity; prints W and the Amari error.
    Separate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "tanh")]
        nonlinearity: NonlinearityKind,
    },
    /// Run a full Monte-Carlo campaign described by a TOML config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Write the learned score table of a dataset as CSV.
    ScoreDump {
        #[command(flatten)]
        data: DataArgs,
        /// Destination file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Ggd,
    Poisson,
}

#[derive(Args)]
struct DataArgs {
    /// CSV of observations, one row per sample and one column per channel, no header.
    /// Without it a synthetic mixture is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ggd")]
    family: Family,
    #[arg(long, default_value_t = 1.6)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, short, default_value_t = 8)]
    m: usize,
    #[arg(long, short, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML config supplying `[pbecf]` and `[fastica]` settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Loaded {
    x: DataMatrix,
    a: Option<DMatrix<f64>>,
}

impl DataArgs {
    fn settings(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::default()),
        }
    }

    fn load(&self) -> Result<Loaded> {
        if let Some(path) = &self.input {
            return Ok(Loaded {
                x: read_observations(path)?,
                a: None,
            });
        }
        let family = match self.family {
            Family::Ggd => SourceFamily::Ggd { beta: self.beta },
            Family::Poisson => SourceFamily::Poisson {
                lambda: self.lambda,
            },
        };
        let d = make_dataset(&Scenario {
            family,
            m: self.m,
            n_samples: self.n,
            seed: self.seed,
        })?;
        Ok(Loaded {
            x: d.x,
            a: Some(d.a),
        })
    }
}

fn read_observations(path: &Path) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let row = rec?
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("row {}: `{v}`: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(row);
    }
    let n = samples.len();
    let m = samples.first().map_or(0, Vec::len);
    if samples.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidInput(
            "rows have differing column counts".into(),
        ));
    }
    DataMatrix::new(DMatrix::from_fn(m, n, |i, j| samples[j][i]))
}

fn print_matrix(out: &mut impl Write, label: &str, w: &DMatrix<f64>) -> io::Result<()> {
    writeln!(out, "{label}:")?;
    for row in w.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

fn separate(data: &DataArgs, kind: NonlinearityKind) -> Result<()> {
    let settings = data.settings()?;
    let loaded = data.load()?;
    let (white, model) = fit_whitening(&loaded.x)?;
    let nl = match kind.fixed() {
        Some(nl) => nl,
        None => Nonlinearity::Learned(Arc::new(tabulate_score(
            &white,
            &settings.pbecf,
            data.seed,
            Exec::Sequential,
        )?)),
    };
    let cfg = FasticaConfig {
        seed: data.seed,
        ..settings.fastica
    };
    let res = run_fastica(&white, &nl, &cfg)?;

    let mut out = io::stdout().lock();
    print_matrix(&mut out, "W (whitened)", &res.w)?;
    print_matrix(&mut out, "W V (observations)", &(&res.w * &model.v))?;
    writeln!(out, "nonlinearity: {kind}")?;
    writeln!(
        out,
        "iterations: {} (converged: {})",
        res.iterations, res.converged
    )?;
    writeln!(
        out,
        "max orthogonality error: {:.3e}",
        res.max_orthogonality_error
    )?;
    writeln!(out, "elapsed: {:.6} s", res.elapsed.as_secs_f64())?;
    match &loaded.a {
        Some(a) => writeln!(
            out,
            "amari error: {:.6}",
            amari_error(&gain_matrix(&res.w, &model.v, a)?)?
        )?,
        None => writeln!(out, "amari error: n/a (mixing matrix unknown)")?,
    }
    Ok(())
}

fn bench(config: &Path, output_dir: Option<PathBuf>, sequential: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if sequential {
        cfg.exec = Exec::Sequential;
    }
    let out = run_campaign(&cfg)?;
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{:<12} {:<8} {:>10} {:>10} {:>10} {:>8} {:>12}",
        "scenario", "nl", "median", "q1", "q3", "failed", "median_s"
    )?;
    for row in &out.summary {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        writeln!(
            stdout,
            "{:<12} {:<8} {:>10} {:>10} {:>10} {:>8} {:>12}",
            row.scenario,
            row.nonlinearity,
            f(row.median_amari),
            f(row.q1_amari),
            f(row.q3_amari),
            row.failures,
            row.median_total_seconds
                .map_or_else(|| "-".to_string(), |v| format!("{v:.5}")),
        )?;
    }
    writeln!(
        stdout,
        "wrote {} and {}",
        out.trials_path.display(),
        out.summary_path.display()
    )?;
    Ok(())
}

fn score_dump(data: &DataArgs, output: Option<&Path>) -> Result<()> {
    let settings = data.settings()?;
    let loaded = data.load()?;
    let (white, _) = fit_whitening(&loaded.x)?;
    let table = tabulate_score(&white, &settings.pbecf, data.seed, settings.exec)?;
    match output {
        Some(path) => table.write_csv(BufWriter::new(File::create(path)?)),
        None => table.write_csv(io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Separate { data, nonlinearity } => separate(data, *nonlinearity),
        Command::Bench {
            config,
            output_dir,
            sequential,
        } => bench(config, output_dir.clone(), *sequential),
        Command::ScoreDump { data, output } => score_dump(data, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
