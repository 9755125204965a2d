use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use memdecay_core::analysis::{DEFAULT_GROUPS, DEFAULT_LAG_BINS};
use memdecay_core::io::{self as mio, ColumnMap, Ingested};
use memdecay_core::metrics::{EvalOptions, DEFAULT_SPLITS, FORMAT_VERSION};
use memdecay_core::model::{DEFAULT_ITERATIONS, DEFAULT_REF_LAG};
use memdecay_core::{
    compare_trend_fits, decile_curves, evaluate_predictions_with, fit_all, simulate_dataset,
    split_half_consistency, CurveGrid, FitConfig, ParamDist, SimSpec, VideoScoreTable,
};

/// Linear memory-decay curves from repeat-detection annotations.
#[derive(Parser)]
#[command(name = "memdecay", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for randomized commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Reference lag T at which m_T is reported.
    #[arg(long, global = true, default_value_t = DEFAULT_REF_LAG)]
    ref_lag: u32,
    /// Alternating passes per video.
    #[arg(long, global = true, default_value_t = DEFAULT_ITERATIONS)]
    iterations: u32,
    /// Stop early once both parameter changes fall below this (0 = never).
    #[arg(long, global = true, default_value_t = 0.0)]
    tol: f64,
    /// Output file; `-` or absent writes to stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Annotation column mapping, e.g. `video_id=url,lag=lag_videos`.
    #[arg(long, global = true)]
    columns: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an annotation file and print a summary.
    IngestCheck { input: PathBuf },
    /// Fit a decay curve per video and write a score file.
    Fit { input: PathBuf },
    /// Evaluate every curve in a score file at one lag.
    ScoreAt {
        scores: PathBuf,
        #[arg(long)]
        lag: u32,
        /// Clamp scores to [0, 1].
        #[arg(long)]
        clamp: bool,
    },
    /// Split-half rank consistency of per-video hit rates.
    Consistency {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPLITS)]
        splits: usize,
    },
    /// Compare predicted scores against ground truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Lags at which R² is reported.
        #[arg(long, value_delimiter = ',', default_value = "40,80,160")]
        lags: Vec<u32>,
        #[arg(long, default_value_t = 40)]
        mae_lo: u32,
        #[arg(long, default_value_t = 180)]
        mae_hi: u32,
        #[arg(long, default_value_t = 100)]
        mae_samples: usize,
    },
    /// Simulate an annotation dataset from known curves.
    Simulate(SimulateArgs),
    /// Hit rate by lag bin for groups of videos ranked by score.
    AnalyzeDeciles {
        input: PathBuf,
        /// Score file used for ranking; fitted from the input when absent.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GROUPS)]
        groups: usize,
        #[arg(long, default_value_t = DEFAULT_LAG_BINS)]
        lag_bins: usize,
    },
    /// Linear vs log-linear fit of pooled hit rate against lag.
    AnalyzeTrend {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LAG_BINS)]
        lag_bins: usize,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Where the ground-truth score file goes.
    #[arg(long)]
    truth_output: PathBuf,
    #[arg(long, default_value_t = 200)]
    videos: usize,
    #[arg(long, default_value_t = 90)]
    annotations: usize,
    #[arg(long, default_value_t = 100)]
    participants: usize,
    /// m_T distribution: `const:V`, `uniform:LO:HI` or `list:A,B,...`.
    #[arg(long, default_value = "uniform:0.4:1")]
    m80: ParamDist,
    #[arg(long, default_value = "uniform:-0.001:0")]
    alpha: ParamDist,
    #[arg(long, default_value_t = 9)]
    lag_lo: u32,
    #[arg(long, default_value_t = 200)]
    lag_hi: u32,
    #[arg(long, default_value_t = 0.0)]
    fa_rate: f64,
}

impl Global {
    fn fit_config(&self) -> FitConfig {
        FitConfig {
            ref_lag: self.ref_lag,
            iterations: self.iterations,
            convergence_tol: self.tol,
            ..FitConfig::default()
        }
    }

    fn column_map(&self) -> Result<ColumnMap> {
        match &self.columns {
            Some(s) => s.parse().context("--columns"),
            None => Ok(ColumnMap::default()),
        }
    }

    fn ingest(&self, path: &Path) -> Result<Ingested> {
        let data = mio::ingest(path, &self.column_map()?)?;
        eprintln!("{}: {}", path.display(), data.summary);
        Ok(data)
    }

    fn announce_seed(&self) {
        eprintln!("seed: {}", self.seed);
    }
}

/// Buffers output and only touches the destination on success.
fn emit(dest: Option<&Path>, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    match dest {
        Some(p) if p != Path::new("-") => {
            let mut f = BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            );
            f.write_all(&buf)?;
            f.flush()
                .with_context(|| format!("cannot write {}", p.display()))?;
        }
        _ => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let out = g.output.as_deref();
    match cli.command {
        Command::IngestCheck { input } => {
            let data = g.ingest(&input)?;
            #[derive(serde::Serialize)]
            struct Summary<'a> {
                format_version: u32,
                source: String,
                sha256: &'a str,
                #[serde(flatten)]
                summary: &'a mio::IngestSummary,
            }
            let s = Summary {
                format_version: FORMAT_VERSION,
                source: input.display().to_string(),
                sha256: &data.sha256,
                summary: &data.summary,
            };
            emit(out, |w| Ok(mio::write_json(w, &s)?))
        }
        Command::Fit { input } => {
            let cfg = g.fit_config();
            cfg.validate()?;
            let data = g.ingest(&input)?;
            let mut table = fit_all(&data.records, &cfg)?;
            if let Some(p) = table.provenance.as_mut() {
                p.input_sha256 = Some(data.sha256);
            }
            eprintln!("fitted {} videos", table.len());
            emit(out, |w| Ok(mio::write_scores(w, &table)?))
        }
        Command::ScoreAt { scores, lag, clamp } => {
            if lag == 0 {
                bail!("--lag must be >= 1");
            }
            let table = mio::read_scores_file(&scores)?;
            emit(out, |w| {
                writeln!(w, "# format_version={FORMAT_VERSION}")?;
                writeln!(w, "video_id,lag,score")?;
                for (id, c) in table.iter() {
                    writeln!(w, "{id},{lag},{}", c.score_at_lag(lag, clamp))?;
                }
                Ok(())
            })
        }
        Command::Consistency { input, splits } => {
            g.announce_seed();
            let data = g.ingest(&input)?;
            let report = split_half_consistency(&data.records, splits, g.seed)?;
            eprintln!("mean rho over {splits} splits: {}", report.mean_rho);
            emit(out, |w| Ok(mio::write_json(w, &report)?))
        }
        Command::Evaluate {
            truth,
            pred,
            lags,
            mae_lo,
            mae_hi,
            mae_samples,
        } => {
            let t = mio::read_scores_file(&truth)?;
            let p = mio::read_scores_file(&pred)?;
            let opts = EvalOptions {
                eval_lags: lags,
                score_lag: g.ref_lag,
                mae_grid: CurveGrid {
                    lag_lo: mae_lo,
                    lag_hi: mae_hi,
                    n_samples: mae_samples,
                },
            };
            let report = evaluate_predictions_with(&t, &p, &opts)?;
            if !report.extrapolated_lags.is_empty() {
                eprintln!(
                    "warning: lags {:?} lie outside the annotated range",
                    report.extrapolated_lags
                );
            }
            emit(out, |w| Ok(mio::write_json(w, &report)?))
        }
        Command::Simulate(a) => {
            g.announce_seed();
            let spec = SimSpec {
                n_videos: a.videos,
                annotations_per_video: a.annotations,
                n_participants: a.participants,
                lag_lo: a.lag_lo,
                lag_hi: a.lag_hi,
                ref_lag: g.ref_lag,
                m80_dist: a.m80,
                alpha_dist: a.alpha,
                false_alarm_rate: a.fa_rate,
                seed: g.seed,
            };
            let sim = simulate_dataset(&spec)?;
            eprintln!(
                "simulated {} annotations over {} videos",
                sim.records.len(),
                sim.truth.len()
            );
            emit(Some(&a.truth_output), |w| {
                Ok(mio::write_scores(w, &sim.truth)?)
            })?;
            emit(out, |w| Ok(mio::write_annotations(w, &sim.records)?))
        }
        Command::AnalyzeDeciles {
            input,
            scores,
            groups,
            lag_bins,
        } => {
            let data = g.ingest(&input)?;
            let table: VideoScoreTable = match scores {
                Some(p) => mio::read_scores_file(&p)?,
                None => {
                    let cfg = g.fit_config();
                    cfg.validate()?;
                    fit_all(&data.records, &cfg)?
                }
            };
            let deciles = decile_curves(&data.records, &table, groups, lag_bins)?;
            emit(out, |w| Ok(mio::write_decile_table(w, &deciles)?))
        }
        Command::AnalyzeTrend { input, lag_bins } => {
            let data = g.ingest(&input)?;
            let trend = compare_trend_fits(&data.records, lag_bins)?;
            eprintln!(
                "r_linear {} r_loglinear {}",
                trend.r_linear, trend.r_loglinear
            );
            emit(out, |w| Ok(mio::write_trend_table(w, &trend)?))
        }
    }
}

fn main() -> ExitCode {
    // clap reports usage errors itself and exits with status 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
