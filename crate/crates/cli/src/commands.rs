//! Subcommand implementations. Every command writes `config.resolved` into
//! the output directory next to its artifacts.
//!
//! | command                 | artifacts                                               |
//! |-------------------------|---------------------------------------------------------|
//! | `train`                 | `metrics.jsonl`, `checkpoint.json`                      |
//! | `eval`                  | `eval.json`                                             |
//! | `simulate density`      | `density.csv`: `d`, `n<dim>`...                         |
//! | `simulate variance`     | `variance.csv`: `d`, `statistic`, `redrawn`             |
//! | `simulate sampler-hist` | `sampler_hist.csv`: `strategy`, `bin_lo`, `bin_hi`, `count`, `mass` |
//! | `simulate pairwise-hist`| `pairwise_hist.csv`: `epoch`, `bin_lo`, `bin_hi`, `count`, `mass`   |
//! | `simulate stability`    | `stability.csv`: `curve`, `iteration`, `threshold`      |
//! | `isotonic`              | `isotonic.csv`: `seed`, `margin_risk`, `lp_risk`, `diff` |
//! | `dataset gen`           | `dataset.csv`: `class`, `x0`...                         |

use std::fs;
use std::path::{Path, PathBuf};

use dwml_core::checkpoint::Checkpoint;
use dwml_core::isotonic::{check_equivalence, RiskInstance};
use dwml_core::sim::{
    density_curve, distance_grid, gradient_variance_curve, pairwise_histogram, sampler_histogram, stability_configs,
    stability_curve, SamplerHistConfig, Table, VarianceConfig,
};
use dwml_core::train::{evaluate, train, train_with_observer, TrainEvent};
use dwml_core::{Dataset, SamplerKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, write_dataset};
use crate::error::{Category, CliError};

pub const RESOLVED_CONFIG: &str = "config.resolved";

/// Output directory with the resolved config already written.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out)?;
        fs::write(cfg.out.join(RESOLVED_CONFIG), cfg.render())?;
        Ok(Self { dir: cfg.out.clone() })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }
}

/// Held-out split as used by training; the whole set when nothing is held out.
fn held_out(cfg: &ExperimentConfig, data: &Dataset) -> Result<Dataset, CliError> {
    if cfg.train.holdout_fraction == 0.0 {
        Ok(data.clone())
    } else {
        Ok(data.split_by_class(cfg.train.holdout_fraction)?.1)
    }
}

fn train_classes(cfg: &ExperimentConfig, data: &Dataset) -> Result<usize, CliError> {
    if cfg.train.holdout_fraction == 0.0 {
        Ok(data.num_classes())
    } else {
        Ok(data.split_by_class(cfg.train.holdout_fraction)?.0.num_classes())
    }
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let data = load_dataset(cfg)?;
    let out = Output::create(cfg)?;
    let outcome = train(&data, &cfg.train)?;
    out.write("metrics.jsonl", outcome.log.to_json_lines()?)?;
    Checkpoint::new(&outcome.net, &outcome.beta, &cfg.render()).save(out.dir.join("checkpoint.json"))?;
    let last = outcome.log.last();
    let recall = |k| last.and_then(|r| r.recall_at(k)).unwrap_or(f64::NAN);
    Ok(format!(
        "trained {} epochs; final Recall@1 {:.4}, NMI {:.4}; wrote {}",
        cfg.train.epochs,
        recall(1),
        last.map_or(f64::NAN, |r| r.nmi),
        out.dir.display()
    ))
}

pub fn run_eval(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let path = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("checkpoint.json"));
    let (net, _) = Checkpoint::load(&path)?.into_parts()?;
    let data = load_dataset(cfg)?;
    if data.dim() != net.input_dim() {
        return Err(CliError::config(format!(
            "checkpoint expects {} input features, dataset has {}",
            net.input_dim(),
            data.dim()
        )));
    }
    let out = Output::create(cfg)?;
    let ev = evaluate(&net, &held_out(cfg, &data)?, &cfg.train.eval_ks, cfg.train.seed)?;
    let report = json!({
        "checkpoint": path.display().to_string(),
        "recall": ev.recall,
        "nmi": ev.nmi,
        "spread": ev.spread,
        "threshold": ev.threshold,
        "verification_accuracy": ev.verification_accuracy,
    });
    out.write("eval.json", serde_json::to_string_pretty(&report)?)?;
    Ok(format!(
        "Recall@1 {:.4}, NMI {:.4}",
        ev.recall.get(&1).copied().unwrap_or(f64::NAN),
        ev.nmi
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Simulation {
    Density,
    Variance,
    SamplerHist,
    PairwiseHist,
    Stability,
}

fn grid(cfg: &ExperimentConfig) -> Vec<f64> {
    distance_grid(cfg.sim.grid_lo, cfg.sim.grid_hi, cfg.sim.grid_step)
}

/// Writes `rows` under a header; each row is pre-formatted.
fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn tagged_rows(tag: String, table: &Table) -> impl Iterator<Item = Vec<String>> + '_ {
    table.rows.iter().map(move |r| {
        std::iter::once(tag.clone())
            .chain(r.iter().map(|v| v.to_string()))
            .collect()
    })
}

pub fn run_simulate(cfg: &ExperimentConfig, which: Simulation) -> Result<String, CliError> {
    let s = &cfg.sim;
    let seed = cfg.train.seed;
    match which {
        Simulation::Density => {
            let out = Output::create(cfg)?;
            let table = density_curve(&s.dims, &grid(cfg))?;
            let path = out.write("density.csv", table.to_csv())?;
            Ok(format!("wrote {}", path.display()))
        }
        Simulation::Variance => {
            let out = Output::create(cfg)?;
            let vc = VarianceConfig {
                dim: s.dim,
                sigma: s.sigma,
                replicates: s.replicates,
                mode: s.noise,
                seed,
            };
            // The curve is defined on [0, 2); a grid reaching the diameter is cut short.
            let g: Vec<f64> = grid(cfg).into_iter().filter(|&d| d < 2.0).collect();
            let table = gradient_variance_curve(&vc, &g)?;
            let path = out.write("variance.csv", table.to_csv())?;
            Ok(format!("wrote {}", path.display()))
        }
        Simulation::SamplerHist => {
            let out = Output::create(cfg)?;
            let strategies = if s.strategies.is_empty() {
                SamplerKind::ALL.to_vec()
            } else {
                s.strategies.clone()
            };
            let mut rows = Vec::new();
            for strategy in strategies {
                let draws = sampler_histogram(&SamplerHistConfig {
                    strategy,
                    dim: s.dim,
                    batch_size: s.batch_size,
                    per_class: s.per_class,
                    draws: s.draws,
                    bin_width: s.bin_width,
                    seed,
                })?;
                rows.extend(tagged_rows(strategy.to_string(), &draws.histogram.to_table()));
            }
            let path = out.dir.join("sampler_hist.csv");
            write_csv(&path, &["strategy", "bin_lo", "bin_hi", "count", "mass"], rows)?;
            Ok(format!("wrote {}", path.display()))
        }
        Simulation::PairwiseHist => {
            let data = load_dataset(cfg)?;
            let out = Output::create(cfg)?;
            let mut rows = Vec::new();
            train_with_observer(&data, &cfg.train, |ev| {
                if let TrainEvent::Epoch {
                    record,
                    evaluation,
                    held_out,
                } = ev
                {
                    let h = pairwise_histogram(&evaluation.embeddings, held_out.labels(), s.bin_width)?;
                    rows.extend(tagged_rows(record.epoch.to_string(), &h.to_table()));
                }
                Ok(())
            })?;
            let path = out.dir.join("pairwise_hist.csv");
            write_csv(&path, &["epoch", "bin_lo", "bin_hi", "count", "mass"], rows)?;
            Ok(format!("wrote {}", path.display()))
        }
        Simulation::Stability => {
            let data = load_dataset(cfg)?;
            let out = Output::create(cfg)?;
            let configs = stability_configs(&cfg.train, train_classes(cfg, &data)?)?;
            let curves = stability_curve(&data, &configs, s.log_every)?;
            let rows = curves.iter().flat_map(|c| {
                c.points
                    .iter()
                    .map(|(it, t)| vec![c.label.clone(), it.to_string(), t.to_string()])
            });
            let path = out.dir.join("stability.csv");
            write_csv(&path, &["curve", "iteration", "threshold"], rows)?;
            let finals: Vec<String> = curves
                .iter()
                .filter_map(|c| c.points.last().map(|p| format!("{} {:.4}", c.label, p.1)))
                .collect();
            Ok(format!(
                "final thresholds: {}; wrote {}",
                finals.join(", "),
                path.display()
            ))
        }
    }
}

/// Instance `k` is drawn from its own generator seeded with `seed + k`, so
/// any row can be regenerated from its `seed` column alone.
pub fn run_isotonic(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let out = Output::create(cfg)?;
    let iso = &cfg.isotonic;
    let mut rows = Vec::with_capacity(iso.instances);
    let mut worst: f64 = 0.0;
    for k in 0..iso.instances as u64 {
        let seed = cfg.train.seed.wrapping_add(k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = RiskInstance::random(&mut rng, iso.max_pos, iso.max_neg, &iso.alphas);
        let r = check_equivalence(&inst)?;
        worst = worst.max(r.abs_diff);
        rows.push(vec![
            seed.to_string(),
            r.margin_risk.to_string(),
            r.lp_risk.to_string(),
            r.abs_diff.to_string(),
        ]);
    }
    let path = out.dir.join("isotonic.csv");
    write_csv(&path, &["seed", "margin_risk", "lp_risk", "diff"], rows)?;
    Ok(format!(
        "{} instances, max diff {worst:e}; wrote {}",
        iso.instances,
        path.display()
    ))
}

pub fn run_dataset_gen(cfg: &ExperimentConfig) -> Result<String, CliError> {
    if cfg.data_path.is_some() {
        return Err(CliError::new(
            Category::Config,
            "dataset gen uses the data.* synthetic keys; unset data.path",
        ));
    }
    let data = cfg.synthetic.generate()?;
    let out = Output::create(cfg)?;
    let path = out.dir.join("dataset.csv");
    write_dataset(&data, fs::File::create(&path)?)?;
    Ok(format!(
        "{} examples, {} classes; wrote {}",
        data.len(),
        data.num_classes(),
        path.display()
    ))
}
