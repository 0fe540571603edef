//! Flat `key = value` experiment configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key ws* '=' ws* value ws* [comment]
//! key     := [a-z0-9_.]+
//! list    := value (',' value)*
//! ```
//!
//! Booleans are `true`/`false`, lists are comma-separated, and `auto`
//! selects the derived default for `lambda_clip` and `batches_per_epoch`.
//! Keys may appear at most once per file; unknown keys are rejected. The
//! resolved form written by [`ExperimentConfig::render`] lists every key in
//! a fixed order and parses back to an identical config.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dwml_core::sim::NoiseMode;
use dwml_core::{SamplerKind, SyntheticSpec, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Dimensions for the density curve.
    pub dims: Vec<usize>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_step: f64,
    /// Sphere dimension for variance and sampler histograms.
    pub dim: usize,
    pub sigma: f64,
    pub replicates: usize,
    pub noise: NoiseMode,
    /// Empty means every strategy.
    pub strategies: Vec<SamplerKind>,
    pub batch_size: usize,
    pub per_class: usize,
    pub draws: usize,
    pub bin_width: f64,
    /// Logging interval (iterations) of stability curves.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dims: vec![4, 8, 16, 32, 64, 128],
            grid_lo: 0.0,
            grid_hi: 2.0,
            grid_step: 0.01,
            dim: 128,
            sigma: 0.05,
            replicates: 10_000,
            noise: NoiseMode::Reproject,
            strategies: Vec::new(),
            batch_size: 128,
            per_class: 4,
            draws: 100_000,
            bin_width: dwml_core::sim::Histogram::DEFAULT_BIN_WIDTH,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicConfig {
    pub instances: usize,
    pub max_pos: usize,
    pub max_neg: usize,
    pub alphas: Vec<f64>,
}

impl Default for IsotonicConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            max_pos: 5,
            max_neg: 5,
            alphas: vec![0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// CSV dataset; `None` uses the synthetic generator.
    pub data_path: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub out: PathBuf,
    /// Checkpoint read by `eval`; defaults to `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    pub sim: SimConfig,
    pub isotonic: IsotonicConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data_path: None,
            synthetic: SyntheticSpec::default(),
            out: PathBuf::from("out"),
            checkpoint: None,
            sim: SimConfig::default(),
            isotonic: IsotonicConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError>
where
    T::Err: Display,
{
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_noise(value: &str) -> Result<NoiseMode, CliError> {
    match value {
        "reproject" => Ok(NoiseMode::Reproject),
        "raw" => Ok(NoiseMode::Raw),
        _ => Err(CliError::config(format!(
            "`sim.noise`: expected reproject or raw, got `{value}`"
        ))),
    }
}

fn noise_str(mode: NoiseMode) -> &'static str {
    match mode {
        NoiseMode::Reproject => "reproject",
        NoiseMode::Raw => "raw",
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_or_empty(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn auto_or<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl ExperimentConfig {
    /// Every recognised key, in the order [`render`](Self::render) writes them.
    pub const KEYS: &'static [&'static str] = &[
        "loss",
        "sampler",
        "alpha",
        "beta0",
        "beta_class_init",
        "beta_img_init",
        "nu",
        "use_class_beta",
        "use_img_beta",
        "batch_size",
        "per_class",
        "epochs",
        "lr",
        "beta_lr",
        "seed",
        "hidden",
        "embedding_dim",
        "d_floor",
        "d_ceil",
        "lambda_clip",
        "pair_floor",
        "holdout_fraction",
        "eval_ks",
        "batches_per_epoch",
        "data.path",
        "data.classes",
        "data.per_class",
        "data.dim",
        "data.spread",
        "data.radius",
        "data.seed",
        "out",
        "checkpoint",
        "sim.dims",
        "sim.grid_lo",
        "sim.grid_hi",
        "sim.grid_step",
        "sim.dim",
        "sim.sigma",
        "sim.replicates",
        "sim.noise",
        "sim.strategies",
        "sim.batch_size",
        "sim.per_class",
        "sim.draws",
        "sim.bin_width",
        "sim.log_every",
        "isotonic.instances",
        "isotonic.max_pos",
        "isotonic.max_neg",
        "isotonic.alphas",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let t = &mut self.train;
        let s = &mut self.sim;
        match key {
            "loss" => t.loss = parse(key, v)?,
            "sampler" => t.sampler = parse(key, v)?,
            "alpha" => t.alpha = parse(key, v)?,
            "beta0" => t.beta0 = parse(key, v)?,
            "beta_class_init" => t.beta_class_init = parse(key, v)?,
            "beta_img_init" => t.beta_img_init = parse(key, v)?,
            "nu" => t.nu = parse(key, v)?,
            "use_class_beta" => t.use_class_beta = parse(key, v)?,
            "use_img_beta" => t.use_img_beta = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "per_class" => t.per_class = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "lr" => t.lr = parse(key, v)?,
            "beta_lr" => t.beta_lr = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "hidden" => t.hidden = parse_list(key, v)?,
            "embedding_dim" => t.embedding_dim = parse(key, v)?,
            "d_floor" => t.d_floor = parse(key, v)?,
            "d_ceil" => t.d_ceil = parse(key, v)?,
            "lambda_clip" => t.lambda_clip = parse_auto(key, v)?,
            "pair_floor" => t.pair_floor = parse(key, v)?,
            "holdout_fraction" => t.holdout_fraction = parse(key, v)?,
            "eval_ks" => t.eval_ks = parse_list(key, v)?,
            "batches_per_epoch" => t.batches_per_epoch = parse_auto(key, v)?,
            "data.path" => self.data_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.classes" => self.synthetic.classes = parse(key, v)?,
            "data.per_class" => self.synthetic.per_class = parse(key, v)?,
            "data.dim" => self.synthetic.dim = parse(key, v)?,
            "data.spread" => self.synthetic.spread = parse(key, v)?,
            "data.radius" => self.synthetic.radius = parse(key, v)?,
            "data.seed" => self.synthetic.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "sim.dims" => s.dims = parse_list(key, v)?,
            "sim.grid_lo" => s.grid_lo = parse(key, v)?,
            "sim.grid_hi" => s.grid_hi = parse(key, v)?,
            "sim.grid_step" => s.grid_step = parse(key, v)?,
            "sim.dim" => s.dim = parse(key, v)?,
            "sim.sigma" => s.sigma = parse(key, v)?,
            "sim.replicates" => s.replicates = parse(key, v)?,
            "sim.noise" => s.noise = parse_noise(v)?,
            "sim.strategies" => s.strategies = parse_list(key, v)?,
            "sim.batch_size" => s.batch_size = parse(key, v)?,
            "sim.per_class" => s.per_class = parse(key, v)?,
            "sim.draws" => s.draws = parse(key, v)?,
            "sim.bin_width" => s.bin_width = parse(key, v)?,
            "sim.log_every" => s.log_every = parse(key, v)?,
            "isotonic.instances" => self.isotonic.instances = parse(key, v)?,
            "isotonic.max_pos" => self.isotonic.max_pos = parse(key, v)?,
            "isotonic.max_neg" => self.isotonic.max_neg = parse(key, v)?,
            "isotonic.alphas" => self.isotonic.alphas = parse_list(key, v)?,
            _ => return Err(CliError::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Value of `key` in the rendered form.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let s = &self.sim;
        Some(match key {
            "loss" => t.loss.to_string(),
            "sampler" => t.sampler.to_string(),
            "alpha" => t.alpha.to_string(),
            "beta0" => t.beta0.to_string(),
            "beta_class_init" => t.beta_class_init.to_string(),
            "beta_img_init" => t.beta_img_init.to_string(),
            "nu" => t.nu.to_string(),
            "use_class_beta" => t.use_class_beta.to_string(),
            "use_img_beta" => t.use_img_beta.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "per_class" => t.per_class.to_string(),
            "epochs" => t.epochs.to_string(),
            "lr" => t.lr.to_string(),
            "beta_lr" => t.beta_lr.to_string(),
            "seed" => t.seed.to_string(),
            "hidden" => join(&t.hidden),
            "embedding_dim" => t.embedding_dim.to_string(),
            "d_floor" => t.d_floor.to_string(),
            "d_ceil" => t.d_ceil.to_string(),
            "lambda_clip" => auto_or(&t.lambda_clip),
            "pair_floor" => t.pair_floor.to_string(),
            "holdout_fraction" => t.holdout_fraction.to_string(),
            "eval_ks" => join(&t.eval_ks),
            "batches_per_epoch" => auto_or(&t.batches_per_epoch),
            "data.path" => path_or_empty(&self.data_path),
            "data.classes" => self.synthetic.classes.to_string(),
            "data.per_class" => self.synthetic.per_class.to_string(),
            "data.dim" => self.synthetic.dim.to_string(),
            "data.spread" => self.synthetic.spread.to_string(),
            "data.radius" => self.synthetic.radius.to_string(),
            "data.seed" => self.synthetic.seed.to_string(),
            "out" => self.out.display().to_string(),
            "checkpoint" => path_or_empty(&self.checkpoint),
            "sim.dims" => join(&s.dims),
            "sim.grid_lo" => s.grid_lo.to_string(),
            "sim.grid_hi" => s.grid_hi.to_string(),
            "sim.grid_step" => s.grid_step.to_string(),
            "sim.dim" => s.dim.to_string(),
            "sim.sigma" => s.sigma.to_string(),
            "sim.replicates" => s.replicates.to_string(),
            "sim.noise" => noise_str(s.noise).to_string(),
            "sim.strategies" => join(&s.strategies),
            "sim.batch_size" => s.batch_size.to_string(),
            "sim.per_class" => s.per_class.to_string(),
            "sim.draws" => s.draws.to_string(),
            "sim.bin_width" => s.bin_width.to_string(),
            "sim.log_every" => s.log_every.to_string(),
            "isotonic.instances" => self.isotonic.instances.to_string(),
            "isotonic.max_pos" => self.isotonic.max_pos.to_string(),
            "isotonic.max_neg" => self.isotonic.max_neg.to_string(),
            "isotonic.alphas" => join(&self.isotonic.alphas),
            _ => return None,
        })
    }

    /// Applies the entries of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            self.set(key, value)
                .map_err(|e| CliError::config(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, entry: &str) -> Result<(), CliError> {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override `{entry}` is not key=value")))?;
        self.set(key.trim(), value)
    }

    /// Every key in canonical order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = self.get(key).expect("every listed key renders");
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        let s = &self.sim;
        if !(s.grid_step > 0.0) || !(s.grid_lo <= s.grid_hi) {
            return Err(CliError::config(
                "sim grid needs grid_lo <= grid_hi and a positive step",
            ));
        }
        if s.replicates == 0 || s.draws == 0 || s.log_every == 0 {
            return Err(CliError::config(
                "sim.replicates, sim.draws and sim.log_every must be positive",
            ));
        }
        if self.isotonic.alphas.is_empty() || self.isotonic.alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(CliError::config("isotonic.alphas needs at least one positive margin"));
        }
        Ok(())
    }
}
