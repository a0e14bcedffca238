//! Command-line front end. Each subcommand writes into its own fresh run
//! directory under the output root, echoing the effective configuration
//! next to its artifacts.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{load_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::{evaluate_model, generate_corpus, random_policy_penalties, train_on_corpus};
use crate::io::checkpoint::{decode_checkpoint, encode_checkpoint};
use crate::io::corpus::{decode_corpus, encode_corpus, write_corpus_csv, CorpusFile};
use crate::io::output::{output_root, read_input, RunDir};
use crate::io::tables::{self, CurveRow, LossRow, PointRow, TrialRow};
use crate::io::Provenance;
use crate::neural::gradcheck_suite;
use crate::report::{build_figures, metrics_rows, BaselineSummary, CiSettings, Summary, TrainSummary};
use crate::stats::{bootstrap_ci, std_err};
use crate::transforms::Condition;

#[derive(Debug, Parser)]
#[command(name = "adaptive-reach", version, about = "Adaptive forward models for reaching under visuomotor perturbations")]
pub struct Cli {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write into exactly this directory (must be new or empty) instead of
    /// a fresh one under the output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random-walk training corpus.
    GenData(GenDataArgs),
    /// Train a forward model on a corpus.
    Train(TrainArgs),
    /// Run the held-out curve and frozen-weight test blocks.
    Test(TestArgs),
    /// Cumulative penalty of a uniform random policy.
    Baseline(BaselineArgs),
    /// Aggregate run directories into figure tables and a summary.
    Report(ReportArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub condition: Condition,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of chains; defaults to the configured corpus size.
    #[arg(long)]
    pub count: Option<usize>,
    /// Also export the corpus as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// corpus.bin, or a gen-data run directory.
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// checkpoint.bin, or a train run directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Defaults to the configured episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories holding train, test or baseline artifacts.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
}

/// Written to every run directory as `provenance.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReportFile {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub summary: TrainSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub episode: usize,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFile {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub summary: BaselineSummary,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let ctx = Context {
        cfg,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::GenData(a) => ctx.gen_data(a),
        Command::Train(a) => ctx.train(a),
        Command::Test(a) => ctx.test(a),
        Command::Baseline(a) => ctx.baseline(a),
        Command::Report(a) => ctx.report(a),
        Command::Gradcheck(a) => gradcheck(a, ctx.cfg.root_seed),
    }
}

struct Context {
    cfg: ExperimentConfig,
    out: Option<PathBuf>,
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_input(path)?)?)
}

/// `path` itself, or `path/name` when `path` is a directory.
fn resolve(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

impl Context {
    fn provenance(&self) -> Provenance {
        Provenance::of(&self.cfg)
    }

    fn open(&self, command: &str, detail: &str) -> Result<RunDir> {
        let dir = match &self.out {
            Some(p) => RunDir::create_exact(p)?,
            None => {
                let name = format!("{command}-{detail}-{}", &self.cfg.hash_hex()[..8]);
                RunDir::create_unique(&output_root(), &name)?
            }
        };
        dir.write("config.json", format!("{}\n", self.cfg.to_json()).as_bytes())?;
        let info = RunInfo {
            provenance: self.provenance(),
            command: command.to_string(),
        };
        dir.write("provenance.json", &json(&info)?)?;
        Ok(dir)
    }

    fn gen_data(&self, a: &GenDataArgs) -> Result<()> {
        let n = a.count.unwrap_or_else(|| self.cfg.effective_corpus_size());
        let file = CorpusFile {
            provenance: self.provenance(),
            geometry: self.cfg.geometry,
            corpus: generate_corpus(&self.cfg, a.condition, a.seed, n),
        };
        let bytes = encode_corpus(&file)?;
        let dir = self.open("gen-data", &format!("{}-s{}", a.condition.label(), a.seed))?;
        dir.write("corpus.bin", &bytes)?;
        if a.csv {
            dir.write_with("corpus.csv", |w| write_corpus_csv(&file, w))?;
        }
        println!("{}", dir.path().display());
        Ok(())
    }

    fn train(&self, a: &TrainArgs) -> Result<()> {
        let file = decode_corpus(&read_input(&resolve(&a.corpus, "corpus.bin"))?)?;
        if file.geometry != self.cfg.geometry {
            return Err(Error::config("geometry", "corpus was generated with a different arm geometry"));
        }
        if file.corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let prov = self.provenance();
        let (model, report) = train_on_corpus(&self.cfg, &file.corpus, prov.config_hash)?;
        let c = file.corpus.condition;
        let dir = self.open("train", &format!("{}-s{}", c.label(), file.corpus.seed))?;
        dir.write("checkpoint.bin", &encode_checkpoint(&model))?;
        let losses: Vec<LossRow> = report
            .epoch_losses
            .iter()
            .enumerate()
            .map(|(epoch, &loss)| LossRow { epoch, loss })
            .collect();
        dir.write_with("loss.csv", |w| tables::write_rows(w, &prov, "loss", &losses))?;
        let summary = TrainSummary {
            condition: c,
            seed: file.corpus.seed,
            corpus_size: file.corpus.len(),
            epochs_run: report.epochs_run,
            final_error_cm: report.final_error_cm,
            weights_checksum: model.weights_checksum(),
        };
        dir.write(
            "train_report.json",
            &json(&TrainReportFile {
                provenance: prov,
                summary,
            })?,
        )?;
        println!("{}", dir.path().display());
        Ok(())
    }

    fn test(&self, a: &TestArgs) -> Result<()> {
        let model = decode_checkpoint(&read_input(&resolve(&a.checkpoint, "checkpoint.bin"))?)?;
        if model.norm != self.cfg.normalization() {
            return Err(Error::config("network", "checkpoint normalization differs from the configuration"));
        }
        if model.hidden() != self.cfg.network.hidden {
            return Err(Error::config("network.hidden", format!("checkpoint has hidden width {}", model.hidden())));
        }
        let results = evaluate_model(&model, &self.cfg)?;
        let prov = self.provenance();
        let (rows, points) = tables::trial_rows(&results.trials);
        let metrics = metrics_rows(&results.trials, self.ci());
        let curve = tables::curve_rows(std::slice::from_ref(&results.curve));
        let dir = self.open("test", &format!("{}-s{}", model.meta.condition.label(), model.meta.seed))?;
        dir.write_with("metrics.csv", |w| tables::write_rows(w, &prov, "metrics", &metrics))?;
        dir.write_with("trials.csv", |w| tables::write_rows(w, &prov, "trials", &rows))?;
        dir.write_with("trajectories.csv", |w| tables::write_rows(w, &prov, "trajectories", &points))?;
        dir.write_with("curve.csv", |w| tables::write_rows(w, &prov, "curve", &curve))?;
        println!("{}", dir.path().display());
        Ok(())
    }

    fn ci(&self) -> CiSettings {
        CiSettings {
            resamples: self.cfg.experiment.bootstrap_resamples,
            level: self.cfg.experiment.ci_level,
            root_seed: self.cfg.root_seed,
        }
    }

    fn baseline(&self, a: &BaselineArgs) -> Result<()> {
        let n = a.episodes.unwrap_or(self.cfg.experiment.baseline_episodes);
        if n == 0 {
            return Err(Error::config("experiment.baseline_episodes", "must be positive"));
        }
        let penalties = random_policy_penalties(&self.cfg, n, 0)?;
        let prov = self.provenance();
        let mut rng = crate::rng::stream_rng(self.cfg.root_seed, crate::rng::Stream::Bootstrap, u64::MAX);
        let ci = bootstrap_ci(&penalties, self.cfg.experiment.bootstrap_resamples, self.cfg.experiment.ci_level, &mut rng);
        let summary = BaselineSummary {
            episodes: n,
            mean: ci.mean,
            std_err: std_err(&penalties),
            ci,
        };
        let rows: Vec<BaselineRow> = penalties
            .iter()
            .enumerate()
            .map(|(episode, &penalty)| BaselineRow { episode, penalty })
            .collect();
        let dir = self.open("baseline", &format!("n{n}"))?;
        dir.write_with("baseline.csv", |w| tables::write_rows(w, &prov, "baseline", &rows))?;
        dir.write(
            "baseline.json",
            &json(&BaselineFile {
                provenance: prov,
                summary,
            })?,
        )?;
        println!("{}", dir.path().display());
        Ok(())
    }

    fn report(&self, a: &ReportArgs) -> Result<()> {
        let mut inputs = ReportInputs::default();
        for d in &a.inputs {
            if !d.is_dir() {
                return Err(Error::MissingInput(d.clone()));
            }
            inputs.load(d)?;
        }
        if inputs.is_empty() {
            return Err(Error::MissingInput(a.inputs[0].join("trials.csv")));
        }
        let prov = self.provenance();
        for (path, p) in &inputs.provenances {
            if *p != prov {
                eprintln!(
                    "warning: {} was produced under config {:016x}, reporting under {:016x}",
                    path.display(),
                    p.config_hash,
                    prov.config_hash
                );
            }
        }
        let figs = build_figures(
            &inputs.trials,
            &inputs.curves,
            &inputs.train,
            inputs.baseline.as_deref(),
            prov,
            self.ci(),
        );
        let dir = self.open("report", &format!("{}in", a.inputs.len()))?;
        dir.write_with("fig3.csv", |w| tables::write_rows(w, &prov, "fig3 adaptation curve", &figs.fig3))?;
        dir.write_with("fig4.csv", |w| tables::write_rows(w, &prov, "fig4 cumulative penalty", &figs.fig4))?;
        dir.write_with("fig5.csv", |w| tables::write_rows(w, &prov, "fig5 normalized paths", &figs.fig5))?;
        dir.write_with("fig6.csv", |w| tables::write_rows(w, &prov, "fig6 angular error", &figs.fig6))?;
        dir.write_with("fig7.csv", |w| tables::write_rows(w, &prov, "fig7 speed", &figs.fig7))?;
        dir.write_with("fig8.csv", |w| tables::write_rows(w, &prov, "fig8 minimum distance", &figs.fig8))?;
        dir.write("summary.json", &json::<Summary>(&figs.summary)?)?;
        println!("{}", dir.path().display());
        Ok(())
    }
}

#[derive(Default)]
struct ReportInputs {
    trials: Vec<crate::experiment::TrialRecord>,
    curves: Vec<crate::experiment::CurveRecord>,
    train: Vec<TrainSummary>,
    baseline: Option<Vec<f64>>,
    provenances: Vec<(PathBuf, Provenance)>,
}

impl ReportInputs {
    fn is_empty(&self) -> bool {
        self.trials.is_empty() && self.curves.is_empty() && self.train.is_empty() && self.baseline.is_none()
    }

    fn csv<T: for<'de> Deserialize<'de>>(&mut self, path: &Path) -> Result<Vec<T>> {
        let bytes = read_input(path)?;
        if let Some(p) = tables::read_provenance(&String::from_utf8_lossy(&bytes)) {
            self.provenances.push((path.to_path_buf(), p));
        }
        tables::read_rows(&bytes[..])
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        let trials = dir.join("trials.csv");
        if trials.exists() {
            let rows: Vec<TrialRow> = self.csv(&trials)?;
            let points: Vec<PointRow> = self.csv(&dir.join("trajectories.csv"))?;
            self.trials.extend(tables::trials_from_rows(&rows, &points)?);
        }
        let curve = dir.join("curve.csv");
        if curve.exists() {
            let rows: Vec<CurveRow> = self.csv(&curve)?;
            self.curves.extend(tables::curves_from_rows(&rows)?);
        }
        let train = dir.join("train_report.json");
        if train.exists() {
            let f: TrainReportFile = read_json(&train)?;
            self.provenances.push((train, f.provenance));
            self.train.push(f.summary);
        }
        let baseline = dir.join("baseline.csv");
        if baseline.exists() {
            let rows: Vec<BaselineRow> = self.csv(&baseline)?;
            self.baseline.get_or_insert_with(Vec::new).extend(rows.iter().map(|r| r.penalty));
        }
        Ok(())
    }
}

/// Threshold the randomized gradient check must stay under.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn gradcheck(a: &GradcheckArgs, root_seed: u64) -> Result<()> {
    if a.instances == 0 {
        return Err(Error::config("--instances", "must be positive"));
    }
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(Error::config("--step", "must be a positive number"));
    }
    let r = gradcheck_suite(root_seed, a.instances, a.step)?;
    println!("max relative error {:.3e} over {} instances", r.max_error, r.instances);
    println!("corrupted-gradient control {:.3e}", r.control_min);
    if r.max_error >= GRADCHECK_TOLERANCE {
        return Err(Error::CheckFailed(format!("gradient error {:.3e} is not below {GRADCHECK_TOLERANCE:e}", r.max_error)));
    }
    Ok(())
}
