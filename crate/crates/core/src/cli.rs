//! File-level commands behind the `tailreg` binary.
//!
//! Every command reads an optional TOML file (`--config`) whose sections
//! mirror the commands, overlays command-line flags, fills the remaining
//! defaults and logs the resolved configuration. Logging that configuration
//! and passing it back through `--config` reproduces a run exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{read_dataset_csv, read_response, read_sparse_dataset, tail_at_level, write_response, write_triplets};
use crate::data::{loglog_points, Dataset, Design};
use crate::debias::{debias, write_inference_csv, CorrectionFold, DebiasConfig, GammaRule, Method, ProjectionConfig, RuleSize};
use crate::error::{Error, Result};
use crate::lasso::{fit_lasso, LassoConfig, Penalty};
use crate::quantile::quantile_inference;
use crate::simulate::{run_monte_carlo, write_replicates_csv, write_summary_csv, DgpConfig, McConfig, ThetaDesign, XDesign};
use crate::text::{build_design, default_stopwords, parse_stopwords, read_corpus, select_vocabulary, write_vocabulary, WordBank};

#[derive(Debug, Parser)]
#[command(name = "tailreg", version, about = "High-dimensional tail index regression")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cutoff_level: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_c: Option<f64>,
    #[arg(long, global = true)]
    pub gamma1_c: Option<f64>,
    #[arg(long, global = true)]
    pub gamma2_c: Option<f64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub level: Option<f64>,
    /// 1-based coordinates, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub coord: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub top_p: Option<usize>,
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study on a simulated design.
    Simulate(SimulateArgs),
    /// Lasso fit on the exceedances.
    Fit(DataArgs),
    /// Debiased confidence intervals for coefficients.
    Infer(DataArgs),
    /// Conditional extreme quantile with a confidence interval.
    Quantile(QuantileArgs),
    /// Word bank, vocabulary and indicator design from a corpus.
    TextPrep(TextArgs),
    /// Rank/log-response points and tail slope.
    Loglog(LoglogArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Combined design, e.g. `gaussian-exponential`.
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Dense CSV with a header; all columns but the response are covariates.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column of `--data`.
    #[arg(long)]
    pub response_col: Option<String>,
    /// Sparse design as `row,col,value` triplets.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Response file with header `y`.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// One feature name per line.
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct QuantileArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Query covariates, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Args, Default)]
pub struct TextArgs {
    /// CSV with columns id,text,likes.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct LoglogArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Top fraction of ranks used for the slope.
    #[arg(long)]
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub tuning: TuningSection,
    pub data: DataSection,
    pub inference: InferenceSection,
    pub simulate: SimulateSection,
    pub quantile: QuantileSection,
    pub text: TextSection,
    pub loglog: LoglogSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSection {
    pub lambda_c: Option<f64>,
    /// Fixed penalty; overrides `lambda_c`.
    pub lambda: Option<f64>,
    pub gamma1_c: Option<f64>,
    pub gamma2_c: Option<f64>,
    /// `estimation` or `projection`.
    pub correction_fold: Option<String>,
    /// `tail` (rules at n0) or `subsample` (rules at each fold's size).
    pub rule_size: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub csv: Option<PathBuf>,
    pub response_col: Option<String>,
    pub triplets: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub cutoff_level: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub method: Option<String>,
    pub folds: Option<usize>,
    pub level: Option<f64>,
    /// 1-based; empty means all coordinates.
    pub coords: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub theta_design: Option<String>,
    pub x_design: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantileSection {
    pub tau: Option<f64>,
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextSection {
    pub corpus: Option<PathBuf>,
    pub top_p: Option<usize>,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoglogSection {
    pub fraction: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Flags win over file values.
    pub fn overlay(&mut self, c: &CommonArgs) {
        fn set<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        set(&mut self.seed, &c.seed);
        set(&mut self.threads, &c.threads);
        set(&mut self.out, &c.out);
        set(&mut self.data.cutoff_level, &c.cutoff_level);
        set(&mut self.tuning.lambda_c, &c.lambda_c);
        if c.lambda_c.is_some() {
            self.tuning.lambda = None;
        }
        set(&mut self.tuning.gamma1_c, &c.gamma1_c);
        set(&mut self.tuning.gamma2_c, &c.gamma2_c);
        set(&mut self.inference.folds, &c.folds);
        set(&mut self.inference.method, &c.method);
        set(&mut self.inference.level, &c.level);
        set(&mut self.inference.coords, &c.coord);
        set(&mut self.text.top_p, &c.top_p);
        set(&mut self.text.stopwords, &c.stopwords);
    }

    fn overlay_data(&mut self, d: &DataArgs) {
        let s = &mut self.data;
        for (dst, src) in [(&mut s.csv, &d.data), (&mut s.triplets, &d.triplets), (&mut s.response, &d.response), (&mut s.vocabulary, &d.vocabulary)] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if d.response_col.is_some() {
            s.response_col = d.response_col.clone();
        }
    }

    /// Fills every unset tuning value with its default.
    pub fn fill_defaults(&mut self) {
        self.seed.get_or_insert(0);
        self.out.get_or_insert_with(|| PathBuf::from("."));
        if self.tuning.lambda.is_none() {
            self.tuning.lambda_c.get_or_insert(1.0);
        }
        self.tuning.gamma1_c.get_or_insert(1.0);
        self.tuning.gamma2_c.get_or_insert(100.0);
        self.tuning.correction_fold.get_or_insert_with(|| "estimation".into());
        self.tuning.rule_size.get_or_insert_with(|| "tail".into());
        self.data.cutoff_level.get_or_insert(0.95);
        self.data.response_col.get_or_insert_with(|| "y".into());
        self.inference.method.get_or_insert_with(|| "crossfit".into());
        self.inference.folds.get_or_insert(5);
        self.inference.level.get_or_insert(0.95);
        self.simulate.theta_design.get_or_insert_with(|| "exponential".into());
        self.simulate.x_design.get_or_insert_with(|| "gaussian".into());
        self.simulate.n.get_or_insert(10_000);
        self.simulate.p.get_or_insert(100);
        self.simulate.reps.get_or_insert(500);
        self.quantile.tau.get_or_insert(0.9);
        self.text.top_p.get_or_insert(500);
        self.loglog.fraction.get_or_insert(0.1);
    }

    pub fn debias_config(&self) -> Result<DebiasConfig> {
        let t = &self.tuning;
        let penalty = match (t.lambda, t.lambda_c) {
            (Some(l), _) => Penalty::Fixed(l),
            (None, c) => Penalty::Rule(c.unwrap_or(1.0)),
        };
        let level = self.inference.level.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0,1), got {level}")));
        }
        Ok(DebiasConfig {
            lasso: LassoConfig::with_penalty(penalty),
            projection: ProjectionConfig {
                gamma1: GammaRule::Rule(t.gamma1_c.unwrap_or(1.0)),
                gamma2: GammaRule::Rule(t.gamma2_c.unwrap_or(100.0)),
                ..ProjectionConfig::default()
            },
            level,
            seed: self.seed.unwrap_or(0),
            correction_fold: t.correction_fold.as_deref().unwrap_or("estimation").parse::<CorrectionFold>()?,
            rule_size: t.rule_size.as_deref().unwrap_or("tail").parse::<RuleSize>()?,
        })
    }

    fn method(&self) -> Result<Method> {
        self.inference.method.as_deref().unwrap_or("crossfit").parse()
    }

    fn folds(&self) -> usize {
        self.inference.folds.unwrap_or(5)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        match (&d.csv, &d.triplets, &d.response, &d.vocabulary) {
            (Some(csv), None, None, None) => {
                read_dataset_csv(File::open(csv).map_err(|e| io_at(csv, e))?, d.response_col.as_deref().unwrap_or("y"))
            }
            (None, Some(t), Some(r), Some(v)) => read_sparse_dataset(t, r, v),
            _ => Err(Error::Config(
                "give either a dense csv, or triplets + response + vocabulary files".into(),
            )),
        }
    }

    fn load_response(&self) -> Result<Vec<f64>> {
        match (&self.data.response, &self.data.csv) {
            (Some(r), _) => read_response(File::open(r).map_err(|e| io_at(r, e))?),
            (None, Some(_)) => Ok(self.load_dataset()?.y),
            (None, None) => Err(Error::Config("no response file given".into())),
        }
    }
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(|e| io_at(&path, e))?))
}

/// Parses `theta-x` design pairs such as `sparse-gaussian` or `gaussian-exponential`.
pub fn parse_design(s: &str) -> Result<(ThetaDesign, XDesign)> {
    let (a, b) = s.split_once('-').ok_or_else(|| Error::Config(format!("design '{s}' is not of the form x-theta")))?;
    match (a.parse::<ThetaDesign>(), b.parse::<XDesign>()) {
        (Ok(t), Ok(x)) => Ok((t, x)),
        _ => Ok((b.parse::<ThetaDesign>()?, a.parse::<XDesign>()?)),
    }
}

/// Resolves the configuration for `cli` and runs it. Output file names are
/// fixed per command and written below `out`.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::from_toml(&fs::read_to_string(path).map_err(|e| io_at(path, e))?)?,
        None => RunConfig::default(),
    };
    cfg.overlay(&cli.common);
    match &cli.command {
        Command::Simulate(a) => {
            if let Some(d) = &a.design {
                let (t, x) = parse_design(d)?;
                cfg.simulate.theta_design = Some(t.as_str().into());
                cfg.simulate.x_design = Some(x.as_str().into());
            }
            if a.n.is_some() {
                cfg.simulate.n = a.n;
            }
            if a.p.is_some() {
                cfg.simulate.p = a.p;
            }
            if a.reps.is_some() {
                cfg.simulate.reps = a.reps;
            }
        }
        Command::Fit(d) | Command::Infer(d) => cfg.overlay_data(d),
        Command::Quantile(q) => {
            cfg.overlay_data(&q.data);
            if q.tau.is_some() {
                cfg.quantile.tau = q.tau;
            }
            if q.x.is_some() {
                cfg.quantile.x = q.x.clone();
            }
        }
        Command::TextPrep(t) => {
            if t.corpus.is_some() {
                cfg.text.corpus = t.corpus.clone();
            }
        }
        Command::Loglog(l) => {
            cfg.overlay_data(&l.data);
            if l.fraction.is_some() {
                cfg.loglog.fraction = l.fraction;
            }
        }
    }
    cfg.fill_defaults();
    log::info!("resolved configuration:\n{}", cfg.to_toml());

    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Fit(_) => cmd_fit(&cfg),
        Command::Infer(_) => cmd_infer(&cfg),
        Command::Quantile(_) => cmd_quantile(&cfg),
        Command::TextPrep(_) => cmd_text_prep(&cfg),
        Command::Loglog(_) => cmd_loglog(&cfg),
    })
}

/// Writes `replicates.csv` and `summary.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.simulate;
    let theta_design: ThetaDesign = s.theta_design.as_deref().unwrap_or("exponential").parse()?;
    let x_design: XDesign = s.x_design.as_deref().unwrap_or("gaussian").parse()?;
    let mut dgp = DgpConfig::new(theta_design, x_design, s.n.unwrap_or(10_000), s.p.unwrap_or(100), cfg.seed.unwrap_or(0));
    dgp.cutoff_level = cfg.data.cutoff_level.unwrap_or(0.95);
    let coord = match cfg.inference.coords.as_deref() {
        None | Some([]) => 0,
        Some([c]) if *c >= 1 => c - 1,
        Some(_) => return Err(Error::Config("simulate evaluates exactly one 1-based coordinate".into())),
    };
    let mc = McConfig {
        dgp,
        reps: s.reps.unwrap_or(500),
        method: cfg.method()?,
        k: cfg.folds(),
        debias: cfg.debias_config()?,
        coord,
    };
    let (summary, reps) = run_monte_carlo(&mc)?;
    if summary.degenerate {
        log::warn!("fewer than two successful replicates; sd reported as 0");
    }
    let dir = cfg.out_dir()?;
    write_replicates_csv(&reps, create(&dir, "replicates.csv")?)?;
    write_summary_csv(&summary, &mc.dgp, create(&dir, "summary.csv")?)?;
    Ok(())
}

/// Writes `fit.json`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_dataset()?;
    let tail = tail_at_level(&data, cfg.data.cutoff_level.unwrap_or(0.95))?;
    let fit = fit_lasso(&tail, &cfg.debias_config()?.lasso)?;
    fit.write_json(create(&cfg.out_dir()?, "fit.json")?)
}

/// Writes `inference.csv`; failed coordinates are listed with `failed=true`.
pub fn cmd_infer(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_dataset()?;
    let tail = tail_at_level(&data, cfg.data.cutoff_level.unwrap_or(0.95))?;
    let coords: Vec<usize> = match cfg.inference.coords.as_deref() {
        None | Some([]) => (0..data.p()).collect(),
        Some(cs) => cs
            .iter()
            .map(|&c| if c >= 1 && c <= data.p() { Ok(c - 1) } else { Err(Error::Config(format!("coordinate {c} out of 1..={}", data.p()))) })
            .collect::<Result<_>>()?,
    };
    let inf = debias(&tail, cfg.method()?, cfg.folds(), &coords, &cfg.debias_config()?)?;
    for c in &inf.coefficients {
        if let Err(e) = &c.estimate {
            log::warn!("coordinate {} failed: {e}", c.coord + 1);
        }
    }
    let names: Vec<String> = (0..data.p()).map(|j| data.feature_name(j)).collect();
    write_inference_csv(&inf, Some(&names), create(&cfg.out_dir()?, "inference.csv")?)
}

/// Writes `quantile.json`.
pub fn cmd_quantile(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_dataset()?;
    let tail = tail_at_level(&data, cfg.data.cutoff_level.unwrap_or(0.95))?;
    let x = match &cfg.quantile.x {
        Some(v) => DVector::from_vec(v.clone()),
        None => return Err(Error::Config("quantile needs query covariates (--x)".into())),
    };
    let est = quantile_inference(&tail, &x, cfg.quantile.tau.unwrap_or(0.9), cfg.folds(), &cfg.debias_config()?)?;
    if est.truncated {
        log::info!("lower interval end truncated at the threshold {}", tail.omega());
    }
    est.write_json(create(&cfg.out_dir()?, "quantile.json")?)
}

/// Writes `word_bank.csv`, `vocabulary.txt`, `design.csv` and `response.csv`.
pub fn cmd_text_prep(cfg: &RunConfig) -> Result<()> {
    let path = cfg.text.corpus.as_ref().ok_or_else(|| Error::Config("text-prep needs --corpus".into()))?;
    let corpus = read_corpus(File::open(path).map_err(|e| io_at(path, e))?)?;
    if corpus.is_empty() {
        return Err(Error::Parse { line: 1, message: "corpus has no posts".into() });
    }
    let stopwords = match &cfg.text.stopwords {
        Some(p) => parse_stopwords(&fs::read_to_string(p).map_err(|e| io_at(p, e))?),
        None => default_stopwords(),
    };
    let bank = WordBank::build(&corpus);
    let spec = select_vocabulary(&bank, cfg.text.top_p.unwrap_or(500), &stopwords)?;
    let data = build_design(&corpus, &spec)?;
    let dir = cfg.out_dir()?;
    bank.write_csv(create(&dir, "word_bank.csv")?)?;
    write_vocabulary(&spec.vocabulary, create(&dir, "vocabulary.txt")?)?;
    match &data.x {
        Design::SparseBinary(m) => write_triplets(m, create(&dir, "design.csv")?)?,
        Design::Dense(_) => unreachable!("text designs are sparse"),
    }
    write_response(&data.y, create(&dir, "response.csv")?)
}

#[derive(Serialize)]
struct SlopeJson {
    slope: f64,
    fraction: f64,
    points: usize,
    dropped: usize,
}

/// Writes `loglog.csv` and `loglog_slope.json`.
pub fn cmd_loglog(cfg: &RunConfig) -> Result<()> {
    let y = cfg.load_response()?;
    let plot = loglog_points(&y)?;
    let fraction = cfg.loglog.fraction.unwrap_or(0.1);
    let slope = plot.slope(fraction)?;
    if plot.dropped > 0 {
        log::info!("dropped {} nonpositive responses", plot.dropped);
    }
    let dir = cfg.out_dir()?;
    plot.write_csv(create(&dir, "loglog.csv")?)?;
    let mut w = create(&dir, "loglog_slope.json")?;
    let doc = SlopeJson { slope, fraction, points: plot.points.len(), dropped: plot.dropped };
    writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("seed = 1\n[tuning]\nlambda_c = 2.0\n").is_ok());
        assert!(matches!(RunConfig::from_toml("sede = 1\n"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[tuning]\nlamda = 2.0\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::from_toml("seed = 1\n[inference]\nfolds = 3\n").unwrap();
        cfg.overlay(&CommonArgs { seed: Some(9), ..Default::default() });
        cfg.fill_defaults();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.inference.folds, Some(3));
        assert_eq!(cfg.tuning.gamma2_c, Some(100.0));
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.fill_defaults();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn design_names() {
        assert_eq!(parse_design("gaussian-exponential").unwrap(), (ThetaDesign::Exponential, XDesign::Gaussian));
        assert_eq!(parse_design("sparse-bernoulli").unwrap(), (ThetaDesign::Sparse, XDesign::Bernoulli));
        assert!(parse_design("gaussian").is_err());
        assert!(parse_design("gaussian-normal").is_err());
    }
}
