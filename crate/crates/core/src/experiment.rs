//! Repeated-split regression benchmark on molecules.
//!
//! Every split fits each model on standardized training targets, optionally
//! tunes hyperparameters, and scores the held-out part. RMSE is reported on
//! the original scale and log likelihood on the standardized scale.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{self, Dataset, EncodingLayout, Molecule, SyntheticConfig};
use crate::error::{GraphGpError, Result};
use crate::gp::{self, GpKernel, GpModel, OptimizeOptions, TargetTransform};
use crate::invariance::{Averaging, InvariantKernel, Projection};
use crate::kernels::{IsotropicKernel, KernelSpec, LinearKernel, SpectralParameter};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    GraphA,
    GraphB,
    /// Graph-A codes with the kernel averaged over within-type relabelings.
    Projected,
}

impl Encoding {
    pub fn label(self) -> &'static str {
        match self {
            Encoding::GraphA => "Graph-A",
            Encoding::GraphB => "Graph-B",
            Encoding::Projected => "Projected",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedSpec {
    pub name: String,
    pub spec: KernelSpec,
}

fn default_splits() -> usize {
    10
}
fn default_ratio() -> f64 {
    0.8
}
fn default_true() -> bool {
    true
}
fn default_budget() -> usize {
    200
}
fn default_noise() -> f64 {
    0.1
}
fn default_encodings() -> Vec<Encoding> {
    vec![Encoding::GraphB, Encoding::GraphA, Encoding::Projected]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// JSON-lines molecule file; relative paths resolve against the config file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Used when `dataset` is absent.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Graph-A layout, also the per-element caps of the size filter.
    pub type_slots: Vec<(String, usize)>,
    #[serde(default = "default_true")]
    pub filter: bool,
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    pub kernels: Vec<NamedSpec>,
    #[serde(default = "default_encodings")]
    pub encodings: Vec<Encoding>,
    #[serde(default = "default_projection")]
    pub projection: Averaging,
    #[serde(default = "default_true")]
    pub optimize: bool,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Initial noise variance on the standardized scale.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_true")]
    pub baselines: bool,
}

fn default_projection() -> Averaging {
    Averaging::Exact
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphGpError::io(path, e))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| GraphGpError::json(path.display().to_string(), e))?;
        if let (Some(data), Some(dir)) = (&config.dataset, path.parent()) {
            if data.is_relative() {
                config.dataset = Some(dir.join(data));
            }
        }
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(GraphGpError::invalid("experiment needs at least one split"));
        }
        if self.dataset.is_none() && self.synthetic.is_none() {
            return Err(GraphGpError::invalid("experiment needs either 'dataset' or 'synthetic'"));
        }
        if self.type_slots.is_empty() {
            return Err(GraphGpError::invalid("'type_slots' is empty"));
        }
        for k in &self.kernels {
            k.spec.validate()?;
        }
        Ok(())
    }

    pub fn layout_a(&self) -> EncodingLayout {
        EncodingLayout {
            strategy: datasets::Strategy::GraphA {
                type_slots: self.type_slots.clone(),
            },
            kind: crate::graphspace::GraphSpaceKind::UndirectedNoLoops,
        }
    }
}

/// Fitted hyperparameters; spectral ones are absent for the baselines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub variance: Option<f64>,
    pub noise: Option<f64>,
    pub kappa: Option<f64>,
    pub nu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: f64,
    pub rmse_normalized: f64,
    pub log_lik: f64,
    pub hyper: Hyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub name: String,
    pub encoding: Option<Encoding>,
    pub kernel: Option<String>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub log_lik_mean: f64,
    pub log_lik_std: f64,
    pub splits: Vec<SplitResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub molecules: usize,
    pub retained: usize,
    pub target_std: f64,
    pub graph_a_nodes: usize,
    pub graph_b_nodes: usize,
    pub group_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub data: DataSummary,
    pub rows: Vec<RowReport>,
}

impl ExperimentReport {
    pub fn row(&self, name: &str) -> Option<&RowReport> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Splits on which `name` has strictly lower RMSE than the Naive row.
    pub fn wins_over_naive(&self, name: &str) -> Option<usize> {
        let naive = self.row(NAIVE)?;
        let row = self.row(name)?;
        Some(row.splits.iter().zip(&naive.splits).filter(|(r, n)| r.rmse < n.rmse).count())
    }

    /// Plain-text table with one line per row.
    pub fn table(&self) -> String {
        let mut out = format!("{:<24} {:>18} {:>20}\n", "model", "RMSE", "log lik");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>9.4} ± {:<6.4} {:>10.4} ± {:<6.4}\n",
                r.name, r.rmse_mean, r.rmse_std, r.log_lik_mean, r.log_lik_std
            ));
        }
        out
    }
}

pub const NAIVE: &str = "Naive";
pub const LINEAR: &str = "Linear";

/// Row name of an encoding/kernel combination.
pub fn row_name(encoding: Encoding, kernel: &str) -> String {
    format!("{} / {}", encoding.label(), kernel)
}

enum Model {
    Naive,
    Linear,
    Spectral(Encoding, KernelSpec),
}

struct Prepared {
    molecules: Vec<Molecule>,
    graph_a: Dataset,
    graph_b: Dataset,
}

fn load_data(config: &ExperimentConfig) -> Result<(String, usize, Vec<Molecule>)> {
    let (source, all) = match (&config.dataset, &config.synthetic) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(GraphGpError::invalid(format!("dataset file {} does not exist", path.display())));
            }
            (path.display().to_string(), datasets::load_molecules(path)?)
        }
        (None, Some(syn)) => ("synthetic".to_string(), datasets::synthetic_molecules(syn)?),
        (None, None) => unreachable!("validated"),
    };
    let total = all.len();
    let kept = if config.filter {
        datasets::filter_small(&all, &config.type_slots)
    } else {
        all
    };
    Ok((source, total, kept))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (source, total, molecules) = load_data(config)?;
    if molecules.len() < 2 {
        return Err(GraphGpError::invalid(format!(
            "only {} molecule(s) remain after filtering; need at least two",
            molecules.len()
        )));
    }
    let layout_a = config.layout_a();
    let data = Prepared {
        graph_a: Dataset::encode(&molecules, &layout_a)?,
        graph_b: Dataset::encode(&molecules, &EncodingLayout::graph_b(None))?,
        molecules,
    };
    let group = datasets::subgroup_from_layout(&layout_a)?;

    let mut models = Vec::new();
    let mut names = Vec::new();
    if config.baselines {
        models.push(Model::Naive);
        names.push((NAIVE.to_string(), None, None));
        models.push(Model::Linear);
        names.push((LINEAR.to_string(), Some(Encoding::GraphA), None));
    }
    for &enc in &config.encodings {
        for k in &config.kernels {
            models.push(Model::Spectral(enc, k.spec.clone()));
            names.push((row_name(enc, &k.name), Some(enc), Some(k.name.clone())));
        }
    }

    let split_root = seed::substream(config.seed, "split");
    let per_split: Vec<Vec<SplitResult>> = (0..config.splits)
        .into_par_iter()
        .map(|s| {
            let seed_s = seed::child(split_root, s as u64);
            let split = datasets::split(data.molecules.len(), config.train_ratio, seed_s)?;
            models
                .iter()
                .map(|m| run_model(m, config, &data, &group, &split, s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let rows = names
        .into_iter()
        .enumerate()
        .map(|(i, (name, encoding, kernel))| {
            let splits: Vec<SplitResult> = per_split.iter().map(|r| r[i].clone()).collect();
            let (rmse_mean, rmse_std) = mean_std(splits.iter().map(|s| s.rmse));
            let (log_lik_mean, log_lik_std) = mean_std(splits.iter().map(|s| s.log_lik));
            RowReport {
                name,
                encoding,
                kernel,
                rmse_mean,
                rmse_std,
                log_lik_mean,
                log_lik_std,
                splits,
            }
        })
        .collect();

    let all_targets = data.graph_a.targets(&(0..data.graph_a.len()).collect::<Vec<_>>());
    Ok(ExperimentReport {
        seed: config.seed,
        data: DataSummary {
            source,
            molecules: total,
            retained: data.molecules.len(),
            target_std: TargetTransform::fit(&all_targets).map(|t| t.std).unwrap_or(0.0),
            graph_a_nodes: data.graph_a.space.n(),
            graph_b_nodes: data.graph_b.space.n(),
            group_order: group.order(),
        },
        rows,
    })
}

/// Mean and sample standard deviation; the deviation of one value is zero.
fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_model(
    model: &Model,
    config: &ExperimentConfig,
    data: &Prepared,
    group: &crate::invariance::PermSubgroup,
    split: &datasets::Split,
    index: usize,
) -> Result<SplitResult> {
    let dataset = match model {
        Model::Spectral(Encoding::GraphB, _) => &data.graph_b,
        _ => &data.graph_a,
    };
    let train_y = dataset.targets(&split.train);
    let test_y = dataset.targets(&split.test);
    let transform = TargetTransform::fit(&train_y)?;
    let base = SplitResult {
        split: index,
        seed: split.seed,
        n_train: split.train.len(),
        n_test: split.test.len(),
        rmse: 0.0,
        rmse_normalized: 0.0,
        log_lik: 0.0,
        hyper: Hyper::default(),
    };

    if let Model::Naive = model {
        let preds = vec![transform.mean; test_y.len()];
        let rmse = datasets::rmse(&preds, &test_y)?;
        let z: Vec<f64> = test_y.iter().map(|&y| transform.forward(y)).collect();
        let ll = datasets::gaussian_log_likelihood(&vec![0.0; z.len()], &vec![1.0; z.len()], &z)?;
        return Ok(SplitResult {
            rmse,
            rmse_normalized: rmse / transform.std,
            log_lik: ll / z.len() as f64,
            ..base
        });
    }

    let train_x = dataset.codes(&split.train);
    let test_x = dataset.codes(&split.test);
    let init = match model {
        Model::Naive => unreachable!(),
        Model::Linear => GpKernel::Linear(LinearKernel { variance: 1.0 }),
        Model::Spectral(Encoding::Projected, spec) => {
            let iso = IsotropicKernel::new(spec.clone(), dataset.space.d())?;
            let averaging = match config.projection {
                Averaging::MonteCarlo { samples, seed: s } => Averaging::MonteCarlo {
                    samples,
                    seed: seed::child(seed::substream(s ^ config.seed, "mc-kernel"), index as u64),
                },
                other => other,
            };
            GpKernel::Invariant(InvariantKernel::new(iso, Projection::new(&dataset.space, group, averaging)?)?)
        }
        Model::Spectral(_, spec) => GpKernel::Isotropic(IsotropicKernel::new(spec.clone(), dataset.space.d())?),
    };
    let (kernel, noise) = if config.optimize {
        let z: Vec<f64> = train_y.iter().map(|&y| transform.forward(y)).collect();
        let out = gp::optimize_hyperparameters(
            &init,
            &train_x,
            &z,
            config.noise,
            OptimizeOptions {
                budget: config.budget,
                optimize_noise: true,
            },
        )?;
        (out.kernel, out.noise)
    } else {
        (init, config.noise)
    };
    let fitted = GpModel::fit_with_transform(kernel, &train_x, &train_y, noise, transform)?;
    let (means, _) = fitted.predict_marginals(&test_x)?;
    let rmse = datasets::rmse(&means, &test_y)?;
    let spec = fitted.kernel().spec();
    let spectral = |p: SpectralParameter| -> Option<f64> {
        spec.filter(|s| s.spectral_parameters().contains(&p)).and_then(|s| match p {
            SpectralParameter::LogKappa => s.kappa(),
            SpectralParameter::LogNu => s.nu().map(|n| n.parameter()),
        })
    };
    Ok(SplitResult {
        rmse,
        rmse_normalized: rmse / transform.std,
        log_lik: datasets::mean_log_lik(&fitted, &test_x, &test_y)?,
        hyper: Hyper {
            variance: Some(fitted.kernel().variance()),
            noise: Some(fitted.noise()),
            kappa: spectral(SpectralParameter::LogKappa),
            nu: spectral(SpectralParameter::LogNu),
        },
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::LaplacianVariant;

    fn config(splits: usize) -> ExperimentConfig {
        let spec = KernelSpec::heat(1.2).with_laplacian(LaplacianVariant::Plain);
        serde_json::from_value(serde_json::json!({
            "seed": 3,
            "synthetic": {
                "count": 30,
                "type_slots": [["C", 2], ["O", 2]],
                "kernel": spec,
                "noise": 0.01,
                "seed": 11
            },
            "type_slots": [["C", 2], ["O", 2]],
            "splits": splits,
            "kernels": [{"name": "Heat", "spec": spec}],
            "budget": 20
        }))
        .unwrap()
    }

    #[test]
    fn report_has_every_row() {
        let report = run_experiment(&config(2)).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            vec![NAIVE, LINEAR, "Graph-B / Heat", "Graph-A / Heat", "Projected / Heat"]
        );
        assert!(report.rows.iter().all(|r| r.splits.len() == 2));
        assert_eq!(report.data.group_order, 4.0);
        assert!(report.table().lines().count() == 6);
    }

    #[test]
    fn single_split_is_deterministic() {
        let a = run_experiment(&config(1)).unwrap();
        let b = run_experiment(&config(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_inputs_are_rejected() {
        let mut c = config(1);
        c.synthetic = None;
        assert!(run_experiment(&c).is_err());
        c.dataset = Some(PathBuf::from("/nonexistent/data.jsonl"));
        let err = run_experiment(&c).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/data.jsonl"));
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std([1.0, 3.0].into_iter()), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std([5.0].into_iter()), (5.0, 0.0));
    }
}
