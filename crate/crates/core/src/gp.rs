//! Exact Gaussian-process regression on graph codes.
//!
//! Posterior moments use a Cholesky factor of `K_xx + σ_ε² I`; posterior
//! draws use pathwise conditioning of joint prior draws. Hyperparameters are
//! tuned by quasi-Newton ascent of the log marginal likelihood in log space.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GraphGpError, Result};
use crate::graphspace::{GraphCode, GraphSpace, SpaceKey};
use crate::invariance::{Averaging, InvariantKernel, PermSubgroup, Projection};
use crate::kernels::{
    self, Covariance, DistanceWeights, IsotropicKernel, KernelSpec, LinearKernel, SpectralParameter,
};
use crate::kravchuk::KravchukTable;
use crate::seed;

/// Smallest observation noise variance.
pub const NOISE_FLOOR: f64 = 1e-8;

/// First jitter, relative to the prior variance.
pub const INITIAL_JITTER: f64 = 1e-8;

/// Jitter escalations (×10 each) after the unjittered attempt.
pub const JITTER_RETRIES: usize = 3;

pub const DEFAULT_FEATURE_BUDGET: u128 = 1 << 20;

/// Covariance functions a model can be built on.
#[derive(Clone, Debug)]
pub enum GpKernel {
    Isotropic(IsotropicKernel),
    Invariant(InvariantKernel),
    Linear(LinearKernel),
}

impl GpKernel {
    pub fn variance(&self) -> f64 {
        match self {
            GpKernel::Isotropic(k) => k.variance(),
            GpKernel::Invariant(k) => k.base().variance(),
            GpKernel::Linear(k) => k.variance,
        }
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        match self {
            GpKernel::Isotropic(k) => Some(k.spec()),
            GpKernel::Invariant(k) => Some(k.base().spec()),
            GpKernel::Linear(_) => None,
        }
    }

    /// The same kernel with another spec; the linear kernel keeps its form.
    pub fn with_spec(&self, spec: KernelSpec) -> Result<GpKernel> {
        Ok(match self {
            GpKernel::Isotropic(k) => GpKernel::Isotropic(k.with_spec(spec)?),
            GpKernel::Invariant(k) => GpKernel::Invariant(k.with_base(k.base().with_spec(spec)?)?),
            GpKernel::Linear(_) => GpKernel::Linear(LinearKernel {
                variance: spec.variance,
            }),
        })
    }

    pub fn with_variance(&self, variance: f64) -> Result<GpKernel> {
        match self {
            GpKernel::Linear(_) => Ok(GpKernel::Linear(LinearKernel { variance })),
            _ => self.with_spec(self.spec().expect("spectral kernel").clone().with_variance(variance)),
        }
    }

    fn expected_len(&self) -> Option<usize> {
        match self {
            GpKernel::Isotropic(k) => Some(k.d()),
            GpKernel::Invariant(k) => Some(k.base().d()),
            GpKernel::Linear(_) => None,
        }
    }

    fn check_codes(&self, xs: &[GraphCode]) -> Result<()> {
        if let (Some(d), Some(x)) = (self.expected_len(), xs.iter().find(|x| Some(x.len()) != self.expected_len())) {
            return Err(GraphGpError::invalid(format!(
                "kernel expects codes of length {d}, got one of length {} in {}",
                x.len(),
                x.space_key()
            )));
        }
        if let GpKernel::Invariant(k) = self {
            let space = k.projection().space();
            for x in xs {
                space.check(x)?;
            }
        }
        Ok(())
    }

    pub fn gram(&self, xs: &[GraphCode], ys: &[GraphCode]) -> Result<DMatrix<f64>> {
        self.check_codes(xs)?;
        self.check_codes(ys)?;
        match self {
            GpKernel::Isotropic(k) => kernels::gram(k, xs, ys),
            GpKernel::Invariant(k) => k.gram(xs, ys),
            GpKernel::Linear(k) => kernels::gram(k, xs, ys),
        }
    }

    pub fn gram_symmetric(&self, xs: &[GraphCode]) -> Result<DMatrix<f64>> {
        self.check_codes(xs)?;
        match self {
            GpKernel::Isotropic(k) => kernels::gram_symmetric(k, xs),
            GpKernel::Invariant(k) => k.gram_symmetric(xs),
            GpKernel::Linear(k) => kernels::gram_symmetric(k, xs),
        }
    }

    pub fn diagonal(&self, xs: &[GraphCode]) -> Result<Vec<f64>> {
        self.check_codes(xs)?;
        xs.iter().map(|x| self.covariance(x, x)).collect()
    }

    pub fn descriptor(&self) -> KernelDescriptor {
        match self {
            GpKernel::Isotropic(k) => KernelDescriptor::Isotropic { spec: k.spec().clone() },
            GpKernel::Invariant(k) => KernelDescriptor::Invariant {
                spec: k.base().spec().clone(),
                blocks: k.projection().group().to_string(),
                averaging: k.projection().averaging(),
            },
            GpKernel::Linear(k) => KernelDescriptor::Linear { variance: k.variance },
        }
    }

    pub fn from_descriptor(descriptor: &KernelDescriptor, space: &GraphSpace) -> Result<GpKernel> {
        Ok(match descriptor {
            KernelDescriptor::Isotropic { spec } => {
                GpKernel::Isotropic(IsotropicKernel::new(spec.clone(), space.d())?)
            }
            KernelDescriptor::Invariant { spec, blocks, averaging } => {
                let group = PermSubgroup::parse(blocks, space.n())?;
                let base = IsotropicKernel::new(spec.clone(), space.d())?;
                GpKernel::Invariant(InvariantKernel::new(base, Projection::new(space, &group, *averaging)?)?)
            }
            KernelDescriptor::Linear { variance } => {
                if !(variance.is_finite() && *variance > 0.0) {
                    return Err(GraphGpError::invalid(format!("variance must be positive, got {variance}")));
                }
                GpKernel::Linear(LinearKernel { variance: *variance })
            }
        })
    }
}

impl Covariance for GpKernel {
    fn covariance(&self, x: &GraphCode, y: &GraphCode) -> Result<f64> {
        match self {
            GpKernel::Isotropic(k) => k.covariance(x, y),
            GpKernel::Invariant(k) => k.covariance(x, y),
            GpKernel::Linear(k) => k.covariance(x, y),
        }
    }
}

/// Serializable description of a [`GpKernel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelDescriptor {
    Isotropic {
        spec: KernelSpec,
    },
    Invariant {
        spec: KernelSpec,
        blocks: String,
        averaging: Averaging,
    },
    Linear {
        variance: f64,
    },
}

/// Affine map between the original target scale and the model scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub mean: f64,
    pub std: f64,
}

impl TargetTransform {
    pub fn identity() -> Self {
        TargetTransform { mean: 0.0, std: 1.0 }
    }

    /// Mean and population standard deviation of `ys`.
    pub fn fit(ys: &[f64]) -> Result<Self> {
        if ys.is_empty() {
            return Err(GraphGpError::invalid("cannot standardize an empty target vector"));
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(GraphGpError::invalid("targets have zero spread; cannot standardize"));
        }
        Ok(TargetTransform { mean, std })
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Lower Cholesky factor of `a + jitter I`, escalating the jitter on failure.
pub fn cholesky_with_jitter(a: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = INITIAL_JITTER * scale;
    for _ in 0..=JITTER_RETRIES {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(b) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(GraphGpError::Decomposition(format!(
        "matrix of size {} is not positive definite even with jitter {:e}",
        a.nrows(),
        jitter / 10.0
    )))
}

/// A square root `R` with `R Rᵀ = a`: Cholesky with jitter, else the
/// eigendecomposition with negative eigenvalues clipped.
fn covariance_root(a: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    match cholesky_with_jitter(a, scale) {
        Ok((c, _)) => c.l(),
        Err(_) => {
            let eig = SymmetricEigen::new(a.clone());
            let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
        }
    }
}

fn check_noise(noise: f64) -> Result<f64> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(GraphGpError::invalid(format!("noise variance must be nonnegative, got {noise}")));
    }
    Ok(noise.max(NOISE_FLOOR))
}

/// Posterior moments on the original target scale.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl Prediction {
    pub fn variance(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }
}

/// A fitted GP: kernel, training data and the factor of `K_xx + σ_ε² I`.
#[derive(Clone, Debug)]
pub struct GpModel {
    kernel: GpKernel,
    train_x: Vec<GraphCode>,
    // original scale, as given
    raw_y: Vec<f64>,
    // model scale
    train_y: DVector<f64>,
    noise: f64,
    transform: TargetTransform,
    factor: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Conditions on `ys` as given.
    pub fn fit(kernel: GpKernel, xs: &[GraphCode], ys: &[f64], noise: f64) -> Result<Self> {
        Self::fit_with_transform(kernel, xs, ys, noise, TargetTransform::identity())
    }

    /// Standardizes the targets first; predictions come back on the original scale.
    pub fn fit_standardized(kernel: GpKernel, xs: &[GraphCode], ys: &[f64], noise: f64) -> Result<Self> {
        let transform = TargetTransform::fit(ys)?;
        Self::fit_with_transform(kernel, xs, ys, noise, transform)
    }

    pub fn fit_with_transform(
        kernel: GpKernel,
        xs: &[GraphCode],
        ys: &[f64],
        noise: f64,
        transform: TargetTransform,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(GraphGpError::invalid("fit needs at least one training point"));
        }
        if xs.len() != ys.len() {
            return Err(GraphGpError::invalid(format!(
                "{} inputs but {} targets",
                xs.len(),
                ys.len()
            )));
        }
        if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
            return Err(GraphGpError::invalid(format!("target {bad} is not finite")));
        }
        let noise = check_noise(noise)?;
        let mut k = kernel.gram_symmetric(xs)?;
        for i in 0..xs.len() {
            k[(i, i)] += noise;
        }
        let (factor, jitter) = cholesky_with_jitter(&k, kernel.variance())?;
        let train_y = DVector::from_iterator(ys.len(), ys.iter().map(|&y| transform.forward(y)));
        let alpha = factor.solve(&train_y);
        Ok(GpModel {
            kernel,
            train_x: xs.to_vec(),
            raw_y: ys.to_vec(),
            train_y,
            noise,
            transform,
            factor: Some(factor),
            alpha,
            jitter,
        })
    }

    /// The prior as a model with no observations.
    pub fn prior(kernel: GpKernel, noise: f64) -> Result<Self> {
        Ok(GpModel {
            kernel,
            train_x: Vec::new(),
            raw_y: Vec::new(),
            train_y: DVector::zeros(0),
            noise: check_noise(noise)?,
            transform: TargetTransform::identity(),
            factor: None,
            alpha: DVector::zeros(0),
            jitter: 0.0,
        })
    }

    pub fn kernel(&self) -> &GpKernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn transform(&self) -> TargetTransform {
        self.transform
    }

    pub fn train_x(&self) -> &[GraphCode] {
        &self.train_x
    }

    /// Training targets on the original scale.
    pub fn train_y(&self) -> &[f64] {
        &self.raw_y
    }

    /// Jitter added on top of the noise to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L` with `L Lᵀ = K_xx + σ_ε² I` (plus any jitter).
    pub fn factor(&self) -> Option<DMatrix<f64>> {
        self.factor.as_ref().map(|f| f.l())
    }

    fn check_space(&self, xs: &[GraphCode]) -> Result<()> {
        if let Some(a) = self.train_x.first() {
            if let Some(bad) = xs.iter().find(|x| x.space_key() != a.space_key()) {
                return Err(GraphGpError::SpaceMismatch {
                    left: a.space_key(),
                    right: bad.space_key(),
                });
            }
        }
        Ok(())
    }

    /// Posterior mean and covariance at `xs`.
    pub fn predict(&self, xs: &[GraphCode]) -> Result<Prediction> {
        self.check_space(xs)?;
        let prior = self.kernel.gram_symmetric(xs)?;
        let (mean, mut cov) = match &self.factor {
            None => (DVector::zeros(xs.len()), prior),
            Some(factor) => {
                let cross = self.kernel.gram(&self.train_x, xs)?;
                let mean = cross.transpose() * &self.alpha;
                let v = factor.l().solve_lower_triangular(&cross).expect("factor is nonsingular");
                (mean, prior - v.transpose() * v)
            }
        };
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..xs.len() {
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        let s = self.transform.std;
        Ok(Prediction {
            mean: mean.map(|m| self.transform.inverse(m)),
            covariance: cov * (s * s),
        })
    }

    /// Posterior means and marginal variances, without the full covariance.
    pub fn predict_marginals(&self, xs: &[GraphCode]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_space(xs)?;
        let prior = self.kernel.diagonal(xs)?;
        let s2 = self.transform.std * self.transform.std;
        match &self.factor {
            None => Ok((vec![self.transform.mean; xs.len()], prior.iter().map(|v| v * s2).collect())),
            Some(factor) => {
                let cross = self.kernel.gram(&self.train_x, xs)?;
                let mean = cross.transpose() * &self.alpha;
                let v = factor.l().solve_lower_triangular(&cross).expect("factor is nonsingular");
                let var = (0..xs.len())
                    .map(|i| (prior[i] - v.column(i).norm_squared()).max(0.0) * s2)
                    .collect();
                Ok((mean.iter().map(|&m| self.transform.inverse(m)).collect(), var))
            }
        }
    }

    /// `log N(y | 0, K + σ_ε² I)` on the model scale.
    pub fn log_marginal_likelihood(&self) -> f64 {
        match &self.factor {
            None => 0.0,
            Some(factor) => {
                let n = self.train_y.len() as f64;
                let log_det: f64 = factor.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
                -0.5 * self.train_y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    pub fn to_file(&self) -> Result<ModelFile> {
        let space = self
            .train_x
            .first()
            .map(|x| x.space_key())
            .ok_or_else(|| GraphGpError::invalid("a prior-only model has no training data to save"))?;
        Ok(ModelFile {
            format: MODEL_FORMAT.into(),
            space,
            kernel: self.kernel.descriptor(),
            noise: self.noise,
            transform: self.transform,
            train_x: self.train_x.iter().map(|x| x.to_string()).collect(),
            train_y: self.raw_y.clone(),
        })
    }

    /// Rebuilds a model by refitting the stored inputs.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(GraphGpError::invalid(format!("unknown model format '{}'", file.format)));
        }
        let space = GraphSpace::new(file.space.kind, file.space.n)?;
        let kernel = GpKernel::from_descriptor(&file.kernel, &space)?;
        let xs = file
            .train_x
            .iter()
            .map(|s| space.code_from_str(s))
            .collect::<Result<Vec<_>>>()?;
        Self::fit_with_transform(kernel, &xs, &file.train_y, file.noise, file.transform)
    }
}

const MODEL_FORMAT: &str = "graphgp-model-1";

/// On-disk model: everything needed to refit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub space: SpaceKey,
    pub kernel: KernelDescriptor,
    pub noise: f64,
    pub transform: TargetTransform,
    pub train_x: Vec<String>,
    /// Original scale.
    pub train_y: Vec<f64>,
}

/// Tunable quantities, all in log space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyperParameter {
    LogVariance,
    LogNoise,
    Spectral(SpectralParameter),
}

impl HyperParameter {
    pub fn name(self) -> &'static str {
        match self {
            HyperParameter::LogVariance => "variance",
            HyperParameter::LogNoise => "noise",
            HyperParameter::Spectral(SpectralParameter::LogKappa) => "kappa",
            HyperParameter::Spectral(SpectralParameter::LogNu) => "nu",
        }
    }

    fn bounds(self) -> (f64, f64) {
        let (lo, hi): (f64, f64) = match self {
            HyperParameter::LogVariance => (1e-6, 1e6),
            HyperParameter::LogNoise => (NOISE_FLOOR, 1e3),
            HyperParameter::Spectral(SpectralParameter::LogKappa) => (1e-3, 1e3),
            HyperParameter::Spectral(SpectralParameter::LogNu) => (1e-2, 1e2),
        };
        (lo.ln(), hi.ln())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions {
    /// Objective evaluations allowed after the initial one.
    pub budget: usize,
    pub optimize_noise: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            budget: 200,
            optimize_noise: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationOutcome {
    pub kernel: GpKernel,
    pub noise: f64,
    pub log_marginal_likelihood: f64,
    pub initial_log_marginal_likelihood: f64,
    pub evaluations: usize,
}

enum PairCache {
    // full row-major n × n
    Weights { d: usize, weights: Vec<DistanceWeights> },
    // ⟨x, y⟩ + 1
    Linear(DMatrix<f64>),
}

/// Log marginal likelihood as a function of log hyperparameters.
struct Objective {
    template: GpKernel,
    params: Vec<HyperParameter>,
    pairs: PairCache,
    ys: DVector<f64>,
    fixed_noise: f64,
}

impl Objective {
    fn new(template: &GpKernel, xs: &[GraphCode], ys: &[f64], noise: f64, optimize_noise: bool) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(GraphGpError::invalid(format!(
                "optimization needs matching nonempty data, got {} inputs and {} targets",
                xs.len(),
                ys.len()
            )));
        }
        template.check_codes(xs)?;
        let n = xs.len();
        let pairs = match template {
            GpKernel::Isotropic(k) => {
                let mut weights = Vec::with_capacity(n * n);
                for x in xs {
                    for y in xs {
                        weights.push(DistanceWeights::single(x.hamming(y)?));
                    }
                }
                PairCache::Weights { d: k.d(), weights }
            }
            GpKernel::Invariant(k) => {
                let prepared = k.prepare_all(xs)?;
                PairCache::Weights {
                    d: k.base().d(),
                    weights: k.pair_weights(&prepared, &prepared),
                }
            }
            GpKernel::Linear(_) => {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = LinearKernel::inner(&xs[i], &xs[j])?;
                    }
                }
                PairCache::Linear(m)
            }
        };
        let mut params = vec![HyperParameter::LogVariance];
        if optimize_noise {
            params.push(HyperParameter::LogNoise);
        }
        if let Some(spec) = template.spec() {
            params.extend(spec.spectral_parameters().into_iter().map(HyperParameter::Spectral));
        }
        Ok(Objective {
            template: template.clone(),
            params,
            pairs,
            ys: DVector::from_column_slice(ys),
            fixed_noise: check_noise(noise)?,
        })
    }

    fn theta_of(&self, kernel: &GpKernel, noise: f64) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| match p {
                HyperParameter::LogVariance => kernel.variance().ln(),
                HyperParameter::LogNoise => noise.ln(),
                HyperParameter::Spectral(SpectralParameter::LogKappa) => {
                    kernel.spec().and_then(|s| s.kappa()).unwrap_or(1.0).ln()
                }
                HyperParameter::Spectral(SpectralParameter::LogNu) => kernel
                    .spec()
                    .and_then(|s| s.nu())
                    .map_or(1.0, |nu| nu.parameter())
                    .ln(),
            })
            .collect()
    }

    fn clamp(&self, theta: &mut [f64]) {
        for (t, p) in theta.iter_mut().zip(&self.params) {
            let (lo, hi) = p.bounds();
            *t = t.clamp(lo, hi);
        }
    }

    fn decode(&self, theta: &[f64]) -> Result<(GpKernel, f64)> {
        let mut noise = self.fixed_noise;
        let mut variance = self.template.variance();
        let mut spec = self.template.spec().cloned();
        for (&t, p) in theta.iter().zip(&self.params) {
            let v = t.exp();
            match p {
                HyperParameter::LogVariance => variance = v,
                HyperParameter::LogNoise => noise = v,
                HyperParameter::Spectral(SpectralParameter::LogKappa) => {
                    spec = spec.map(|s| s.with_kappa(v));
                }
                HyperParameter::Spectral(SpectralParameter::LogNu) => {
                    spec = spec.map(|s| s.with_nu_parameter(v));
                }
            }
        }
        let kernel = match spec {
            Some(s) => self.template.with_spec(s.with_variance(variance))?,
            None => GpKernel::Linear(LinearKernel { variance }),
        };
        Ok((kernel, noise))
    }

    /// Objective and gradient with respect to `theta`.
    fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (kernel, noise) = self.decode(theta)?;
        let n = self.ys.len();
        let (k, derivs): (DMatrix<f64>, Vec<Option<DMatrix<f64>>>) = match (&self.pairs, &kernel) {
            (PairCache::Linear(m), _) => (m * kernel.variance(), vec![]),
            (PairCache::Weights { d, weights }, _) => {
                let spec = kernel.spec().expect("spectral kernel").clone();
                let iso = IsotropicKernel::new(spec, *d)?;
                let profile = iso.profile();
                let k = DMatrix::from_fn(n, n, |i, j| weights[i * n + j].contract(profile));
                let derivs = self
                    .params
                    .iter()
                    .map(|p| match p {
                        HyperParameter::Spectral(sp) => {
                            let dp = iso.profile_derivative(*sp);
                            Some(DMatrix::from_fn(n, n, |i, j| weights[i * n + j].contract(&dp)))
                        }
                        _ => None,
                    })
                    .collect();
                (k, derivs)
            }
        };
        let mut ky = k.clone();
        for i in 0..n {
            ky[(i, i)] += noise;
        }
        let (chol, _) = cholesky_with_jitter(&ky, kernel.variance())?;
        let alpha = chol.solve(&self.ys);
        let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let value =
            -0.5 * self.ys.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        // ∂/∂θ = ½ tr((ααᵀ − K_y⁻¹) ∂K)
        let w = &alpha * alpha.transpose() - chol.inverse();
        let grad = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                HyperParameter::LogVariance => 0.5 * w.component_mul(&k).sum(),
                HyperParameter::LogNoise => 0.5 * noise * w.trace(),
                HyperParameter::Spectral(_) => match derivs.get(i).and_then(|d| d.as_ref()) {
                    Some(dk) => 0.5 * w.component_mul(dk).sum(),
                    None => 0.0,
                },
            })
            .collect();
        Ok((value, grad))
    }
}

/// Log marginal likelihood and its gradient in the log hyperparameters.
pub fn log_marginal_likelihood_gradient(
    kernel: &GpKernel,
    xs: &[GraphCode],
    ys: &[f64],
    noise: f64,
) -> Result<(f64, Vec<(HyperParameter, f64)>)> {
    let objective = Objective::new(kernel, xs, ys, noise, true)?;
    let theta = objective.theta_of(kernel, check_noise(noise)?);
    let (value, grad) = objective.evaluate(&theta)?;
    Ok((value, objective.params.iter().copied().zip(grad).collect()))
}

/// Maximizes the log marginal likelihood with BFGS and Armijo backtracking,
/// within box bounds in log space. Returns the best point visited.
pub fn optimize_hyperparameters(
    init: &GpKernel,
    xs: &[GraphCode],
    ys: &[f64],
    noise: f64,
    options: OptimizeOptions,
) -> Result<OptimizationOutcome> {
    let objective = Objective::new(init, xs, ys, noise, options.optimize_noise)?;
    let init_noise = check_noise(noise)?;
    let mut theta = objective.theta_of(init, init_noise);
    for (t, p) in theta.iter().zip(&objective.params) {
        if !t.is_finite() {
            return Err(GraphGpError::invalid(format!("initial {} is not positive and finite", p.name())));
        }
    }
    let start = objective.evaluate(&theta).map_err(|e| {
        GraphGpError::invalid(format!("objective cannot be evaluated at the initial hyperparameters: {e}"))
    })?;
    if !start.0.is_finite() {
        let named: Vec<String> = objective
            .params
            .iter()
            .zip(&theta)
            .map(|(p, t)| format!("{}={:e}", p.name(), t.exp()))
            .collect();
        return Err(GraphGpError::invalid(format!(
            "objective is not finite at the initial hyperparameters ({})",
            named.join(", ")
        )));
    }
    let initial_value = start.0;
    let mut evaluations = 0;
    if options.budget > 0 {
        objective.clamp(&mut theta);
    }
    // minimize g = -objective
    let (mut fx, mut gx) = (-start.0, start.1.iter().map(|g| -g).collect::<Vec<_>>());
    let dim = theta.len();
    let mut h = DMatrix::<f64>::identity(dim, dim);
    'outer: while evaluations < options.budget {
        let g = DVector::from_column_slice(&gx);
        let mut p = -(&h * &g);
        if g.dot(&p) >= 0.0 {
            h = DMatrix::identity(dim, dim);
            p = -g.clone();
        }
        for (i, param) in objective.params.iter().enumerate() {
            let (lo, hi) = param.bounds();
            if (theta[i] <= lo && p[i] < 0.0) || (theta[i] >= hi && p[i] > 0.0) {
                p[i] = 0.0;
            }
        }
        let pmax = p.amax();
        if pmax < 1e-12 {
            break;
        }
        if pmax > 2.0 {
            p *= 2.0 / pmax;
        }
        let mut t = 1.0;
        let (next, fnext, gnext) = loop {
            if evaluations >= options.budget {
                break 'outer;
            }
            let mut cand: Vec<f64> = theta.iter().zip(p.iter()).map(|(a, b)| a + t * b).collect();
            objective.clamp(&mut cand);
            evaluations += 1;
            let decrease: f64 = gx.iter().zip(cand.iter().zip(&theta)).map(|(g, (c, a))| g * (c - a)).sum();
            if let Ok((v, grad)) = objective.evaluate(&cand) {
                if v.is_finite() && -v <= fx + 1e-4 * decrease {
                    break (cand, -v, grad.iter().map(|g| -g).collect::<Vec<_>>());
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                break 'outer;
            }
        };
        let s = DVector::from_iterator(dim, next.iter().zip(&theta).map(|(a, b)| a - b));
        let y = DVector::from_iterator(dim, gnext.iter().zip(&gx).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            h = left * &h * right + rho * &s * s.transpose();
        }
        let improvement = fx - fnext;
        theta = next;
        fx = fnext;
        gx = gnext;
        if improvement < 1e-12 * (1.0 + fx.abs()) || gx.iter().all(|g| g.abs() < 1e-8) {
            break;
        }
    }
    let (kernel, noise) = if options.budget == 0 {
        (init.clone(), init_noise)
    } else {
        objective.decode(&theta)?
    };
    Ok(OptimizationOutcome {
        kernel,
        noise,
        log_marginal_likelihood: -fx,
        initial_log_marginal_likelihood: initial_value,
        evaluations,
    })
}

fn standard_normals(rng: &mut seed::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `n_samples` prior draws at `xs`, one per row: `f = K^{1/2} ε`.
pub fn sample_prior_exact(kernel: &GpKernel, xs: &[GraphCode], n_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    let k = kernel.gram_symmetric(xs)?;
    if n_samples == 0 || xs.is_empty() {
        return Ok(DMatrix::zeros(n_samples, xs.len()));
    }
    let root = covariance_root(&k, kernel.variance());
    let mut rng = seed::rng(seed);
    let z = standard_normals(&mut rng, xs.len(), n_samples);
    Ok((root * z).transpose())
}

/// Approximate prior sampling through finite expansions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureMode {
    /// All Walsh functions `w_T` with `|T| <= levels`.
    TruncatedWalsh { levels: usize },
    /// `L = anchors` random zonal functions `G_{d,j}(·, u_l)` per level.
    RandomPhase { levels: usize, anchors: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct FeatureSampler {
    mode: FeatureMode,
    kernel: IsotropicKernel,
    budget: u128,
    anchors: Vec<GraphCode>,
}

impl FeatureSampler {
    pub fn new(kernel: IsotropicKernel, mode: FeatureMode, space: &GraphSpace) -> Result<Self> {
        Self::with_budget(kernel, mode, space, DEFAULT_FEATURE_BUDGET)
    }

    pub fn with_budget(kernel: IsotropicKernel, mode: FeatureMode, space: &GraphSpace, budget: u128) -> Result<Self> {
        let d = kernel.d();
        if space.d() != d {
            return Err(GraphGpError::invalid(format!(
                "kernel has d = {d} but the space {} has d = {}",
                space.key(),
                space.d()
            )));
        }
        let count = match mode {
            FeatureMode::TruncatedWalsh { levels } => (0..=levels.min(d)).map(|j| binom_u128(d, j)).sum::<u128>(),
            FeatureMode::RandomPhase { levels, anchors, .. } => {
                if anchors == 0 {
                    return Err(GraphGpError::invalid("random-phase sampling needs at least one anchor"));
                }
                (levels.min(d) as u128 + 1) * anchors as u128
            }
        };
        if count > budget {
            return Err(GraphGpError::FeatureBudget { count, budget });
        }
        let anchors = match mode {
            FeatureMode::RandomPhase { anchors, seed: s, .. } => {
                let mut rng = seed::rng(s);
                (0..anchors).map(|_| space.random_code(&mut rng)).collect()
            }
            FeatureMode::TruncatedWalsh { .. } => Vec::new(),
        };
        Ok(FeatureSampler {
            mode,
            kernel,
            budget,
            anchors,
        })
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn budget(&self) -> u128 {
        self.budget
    }

    pub fn anchors(&self) -> &[GraphCode] {
        &self.anchors
    }

    fn levels(&self) -> usize {
        let d = self.kernel.d();
        match self.mode {
            FeatureMode::TruncatedWalsh { levels } | FeatureMode::RandomPhase { levels, .. } => levels.min(d),
        }
    }

    /// `ln α_j = ln σ² + ln c_j − ln C(d, j)`.
    fn log_alpha(&self, j: usize) -> f64 {
        let t = self.kernel.table();
        self.kernel.variance().ln() + self.kernel.coefficients().log_weights()[j] - t.log_binoms()[j]
    }

    /// Feature matrix `Ψ` (points × features) with `f = Ψ ε`.
    pub fn features(&self, xs: &[GraphCode]) -> Result<DMatrix<f64>> {
        let d = self.kernel.d();
        for x in xs {
            if x.len() != d {
                return Err(GraphGpError::invalid(format!("code of length {} for a kernel with d = {d}", x.len())));
            }
        }
        let levels = self.levels();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        match self.mode {
            FeatureMode::TruncatedWalsh { .. } => {
                for j in 0..=levels {
                    let scale = (0.5 * self.log_alpha(j)).exp();
                    for_each_subset(d, j, |subset| {
                        columns.push(
                            xs.iter()
                                .map(|x| {
                                    let parity = subset.iter().filter(|&&t| x.bit(t)).count() % 2;
                                    if parity == 0 {
                                        scale
                                    } else {
                                        -scale
                                    }
                                })
                                .collect(),
                        );
                    });
                }
            }
            FeatureMode::RandomPhase { anchors, .. } => {
                let table: &KravchukTable = self.kernel.table();
                for j in 0..=levels {
                    // √(α_j / L) G_{d,j} = √(σ² c_j C(d,j) / L) G'_{d,j}
                    let scale = (0.5 * (self.log_alpha(j) + 2.0 * table.log_binoms()[j] - (anchors as f64).ln())).exp();
                    for u in &self.anchors {
                        columns.push(
                            xs.iter()
                                .map(|x| scale * table.normalized_unchecked(j, x.hamming_unchecked(u)))
                                .collect(),
                        );
                    }
                }
            }
        }
        let f = columns.len();
        Ok(DMatrix::from_fn(xs.len(), f, |i, c| columns[c][i]))
    }

    /// Covariance of the sampler's draws, `Ψ Ψᵀ`.
    pub fn feature_covariance(&self, xs: &[GraphCode]) -> Result<DMatrix<f64>> {
        let psi = self.features(xs)?;
        Ok(&psi * psi.transpose())
    }

    /// Covariance the random-phase draws approach as the anchor count grows:
    /// `Σ_j α_j E_u[G_{d,j}(x,u) G_{d,j}(y,u)] = Σ_{j<=J} σ² c_j G'_{d,j}(x,y)`.
    pub fn limit_covariance(&self, xs: &[GraphCode]) -> Result<DMatrix<f64>> {
        let table = self.kernel.table();
        let levels = self.levels();
        let profile: Vec<f64> = (0..=self.kernel.d())
            .map(|m| {
                (0..=levels)
                    .map(|j| self.kernel.variance() * self.kernel.coefficients().weight(j) * table.normalized_unchecked(j, m))
                    .sum()
            })
            .collect();
        Ok(DMatrix::from_fn(xs.len(), xs.len(), |a, b| profile[xs[a].hamming_unchecked(&xs[b])]))
    }

    /// `n_samples` draws at `xs`, one per row.
    pub fn sample(&self, xs: &[GraphCode], n_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
        let psi = self.features(xs)?;
        let mut rng = seed::rng(seed);
        let eps = standard_normals(&mut rng, psi.ncols(), n_samples);
        Ok((psi * eps).transpose())
    }
}

fn binom_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Calls `f` on every `j`-subset of `0..d` in lexicographic order.
fn for_each_subset(d: usize, j: usize, mut f: impl FnMut(&[usize])) {
    if j > d {
        return;
    }
    let mut idx: Vec<usize> = (0..j).collect();
    loop {
        f(&idx);
        let mut i = j;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < d - j + i {
                idx[i] += 1;
                for k in i + 1..j {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `f_{|y}(·) = f(·) + K_{·x}(K_xx + σ_ε² I)^{-1}(y − f(x) − ε)`, one draw per row.
pub fn posterior_sample(model: &GpModel, xs: &[GraphCode], n_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    model.check_space(xs)?;
    let n_train = model.train_x.len();
    let all: Vec<GraphCode> = model.train_x.iter().chain(xs).cloned().collect();
    let mut rng = seed::rng(seed);
    let joint = model.kernel.gram_symmetric(&all)?;
    let root = covariance_root(&joint, model.kernel.variance());
    let z = standard_normals(&mut rng, all.len(), n_samples);
    let prior = root * z;
    let mut out = prior.rows(n_train, xs.len()).into_owned();
    if let Some(factor) = &model.factor {
        let eps = standard_normals(&mut rng, n_train, n_samples) * model.noise.sqrt();
        let mut resid = -(prior.rows(0, n_train).into_owned() + eps);
        for mut col in resid.column_iter_mut() {
            col += &model.train_y;
        }
        let weights = factor.solve(&resid);
        let cross = model.kernel.gram(xs, &model.train_x)?;
        out += cross * weights;
    }
    let t = model.transform;
    Ok(out.transpose().map(|v| t.inverse(v)))
}

/// Every permuted input `project_posterior_sample` reads when projecting at `targets`.
pub fn required_inputs(projection: &Projection, targets: &[GraphCode]) -> Result<Vec<GraphCode>> {
    let mut set = BTreeSet::new();
    for x in targets {
        set.extend(projection.images(x)?);
    }
    Ok(set.into_iter().collect())
}

/// `f_{/H}(x) = |S|^{-1} Σ_{σ∈S} f(σx)` applied to draws tabulated at `inputs`
/// (one draw per row); returns draws at `targets`.
pub fn project_posterior_sample(
    projection: &Projection,
    inputs: &[GraphCode],
    sample: &DMatrix<f64>,
    targets: &[GraphCode],
) -> Result<DMatrix<f64>> {
    if sample.ncols() != inputs.len() {
        return Err(GraphGpError::invalid(format!(
            "sample has {} columns for {} inputs",
            sample.ncols(),
            inputs.len()
        )));
    }
    let column: HashMap<&GraphCode, usize> = inputs.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut images = Vec::with_capacity(targets.len());
    let mut missing = BTreeSet::new();
    for x in targets {
        let img = projection.images(x)?;
        missing.extend(img.iter().filter(|z| !column.contains_key(z)).map(|z| z.to_string()));
        images.push(img);
    }
    if !missing.is_empty() {
        return Err(GraphGpError::MissingInputs(missing.into_iter().collect()));
    }
    let mut out = DMatrix::zeros(sample.nrows(), targets.len());
    for (t, img) in images.iter().enumerate() {
        let w = 1.0 / img.len() as f64;
        for z in img {
            let c = column[z];
            for r in 0..sample.nrows() {
                out[(r, t)] += w * sample[(r, c)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphspace::GraphSpaceKind;
    use crate::kernels::LaplacianVariant;

    fn space(kind: GraphSpaceKind, n: usize) -> GraphSpace {
        GraphSpace::new(kind, n).unwrap()
    }

    fn heat(kappa: f64, d: usize) -> GpKernel {
        GpKernel::Isotropic(IsotropicKernel::new(KernelSpec::heat(kappa).with_laplacian(LaplacianVariant::Plain), d).unwrap())
    }

    fn distinct_codes(space: &GraphSpace, count: usize, seed_value: u64) -> Vec<GraphCode> {
        let mut rng = seed::rng(seed_value);
        let mut seen = BTreeSet::new();
        while seen.len() < count {
            seen.insert(space.random_code(&mut rng));
        }
        let mut out: Vec<GraphCode> = seen.into_iter().collect();
        use rand::seq::SliceRandom;
        out.shuffle(&mut rng);
        out
    }

    #[test]
    fn single_point_interpolates() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 3);
        let x = s.code_from_str("101").unwrap();
        let model = GpModel::fit(heat(1.0, 3), std::slice::from_ref(&x), &[2.5], 0.0).unwrap();
        let p = model.predict(&[x]).unwrap();
        assert!((p.mean[0] - 2.5).abs() < 1e-6);
        assert!(p.covariance[(0, 0)] < 1e-6);
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let x = s.empty_code();
        let far = s.code_from_str("111111").unwrap();
        let model = GpModel::fit(heat(0.3, 6), &[x], &[1.0], 1e-4).unwrap();
        let p = model.predict(&[far]).unwrap();
        assert!(p.mean[0].abs() < 1e-6);
        assert!((p.covariance[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prior_model_and_errors() {
        let s = space(GraphSpaceKind::DirectedNoLoops, 3);
        let prior = GpModel::prior(heat(1.0, 6), 0.1).unwrap();
        let xs = distinct_codes(&s, 3, 1);
        let p = prior.predict(&xs).unwrap();
        assert!(p.mean.iter().all(|&m| m == 0.0));
        assert!(p.variance().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(GpModel::fit(heat(1.0, 6), &[], &[], 0.1).is_err());
        assert!(GpModel::fit(heat(1.0, 6), &xs, &[1.0], 0.1).is_err());
        let fitted = GpModel::fit(heat(1.0, 6), &xs, &[1.0, 2.0, 3.0], 0.1).unwrap();
        let other = space(GraphSpaceKind::UndirectedNoLoops, 4).empty_code();
        assert!(fitted.predict(&[other]).is_err());
    }

    #[test]
    fn lml_single_point() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 3);
        let kernel = GpKernel::Isotropic(IsotropicKernel::new(KernelSpec::heat(1.0).with_variance(2.0), 3).unwrap());
        let model = GpModel::fit(kernel, &[s.empty_code()], &[0.0], 0.5).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 2.5).ln();
        assert!((model.log_marginal_likelihood() - expect).abs() < 1e-12);
    }

    #[test]
    fn lml_gradient_matches_central_differences() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        for trial in 0..5u64 {
            let xs = distinct_codes(&s, 12, 100 + trial);
            let mut rng = seed::rng(trial);
            let ys: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let kernels = [
                GpKernel::Isotropic(IsotropicKernel::new(KernelSpec::heat(0.8 + 0.2 * trial as f64).with_variance(1.3), 6).unwrap()),
                GpKernel::Isotropic(IsotropicKernel::new(KernelSpec::matern_offset(1.5, 1.1).with_variance(0.7), 6).unwrap()),
            ];
            for kernel in kernels {
                let noise = 0.05;
                let (_, grad) = log_marginal_likelihood_gradient(&kernel, &xs, &ys, noise).unwrap();
                let obj = Objective::new(&kernel, &xs, &ys, noise, true).unwrap();
                let theta = obj.theta_of(&kernel, noise);
                for (i, (param, g)) in grad.iter().enumerate() {
                    let h = 1e-4;
                    let mut up = theta.clone();
                    up[i] += h;
                    let mut down = theta.clone();
                    down[i] -= h;
                    let fd = (obj.evaluate(&up).unwrap().0 - obj.evaluate(&down).unwrap().0) / (2.0 * h);
                    assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-3), "{param:?}: {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn zero_budget_returns_init() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let xs = distinct_codes(&s, 8, 3);
        let ys: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let init = heat(1.3, 6);
        let out = optimize_hyperparameters(&init, &xs, &ys, 0.1, OptimizeOptions { budget: 0, optimize_noise: true }).unwrap();
        assert_eq!(out.kernel.spec().unwrap().kappa(), Some(1.3));
        assert_eq!(out.noise, 0.1);
        assert_eq!(out.evaluations, 0);
        let more = optimize_hyperparameters(&init, &xs, &ys, 0.1, OptimizeOptions::default()).unwrap();
        assert!(more.log_marginal_likelihood >= more.initial_log_marginal_likelihood);
        assert!(optimize_hyperparameters(&init, &xs, &ys, f64::NAN, OptimizeOptions::default()).is_err());
    }

    #[test]
    fn truncated_walsh_level_zero_is_constant() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let iso = IsotropicKernel::new(KernelSpec::heat(1.0).with_variance(2.0), 6).unwrap();
        let sampler = FeatureSampler::new(iso.clone(), FeatureMode::TruncatedWalsh { levels: 0 }, &s).unwrap();
        let xs = distinct_codes(&s, 4, 2);
        let cov = sampler.feature_covariance(&xs).unwrap();
        let alpha0 = 2.0 * iso.coefficients().weight(0);
        assert!(cov.iter().all(|v| (v - alpha0).abs() < 1e-12));
        let draws = sampler.sample(&xs, 3, 1).unwrap();
        for r in 0..3 {
            assert!(draws.row(r).iter().all(|v| (v - draws[(r, 0)]).abs() < 1e-12));
        }
    }

    #[test]
    fn truncated_walsh_full_is_exact() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let iso = IsotropicKernel::new(KernelSpec::matern_offset(2.5, 1.0).with_variance(1.5), 6).unwrap();
        let sampler = FeatureSampler::new(iso.clone(), FeatureMode::TruncatedWalsh { levels: 6 }, &s).unwrap();
        let xs = distinct_codes(&s, 10, 4);
        let cov = sampler.feature_covariance(&xs).unwrap();
        let exact = kernels::gram_symmetric(&iso, &xs).unwrap();
        assert!((cov - exact).abs().max() < 1e-12);
    }

    #[test]
    fn feature_budget_is_enforced() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 8);
        let iso = IsotropicKernel::new(KernelSpec::heat(1.0), 28).unwrap();
        let err = FeatureSampler::with_budget(iso.clone(), FeatureMode::TruncatedWalsh { levels: 3 }, &s, 1000).unwrap_err();
        assert!(matches!(err, GraphGpError::FeatureBudget { count: 3683, budget: 1000 }));
        assert!(FeatureSampler::new(iso, FeatureMode::RandomPhase { levels: 28, anchors: 0, seed: 1 }, &s).is_err());
    }

    #[test]
    fn random_phase_limit_is_the_kernel() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let iso = IsotropicKernel::new(KernelSpec::heat(2.0), 6).unwrap();
        let sampler = FeatureSampler::new(iso.clone(), FeatureMode::RandomPhase { levels: 6, anchors: 8, seed: 3 }, &s).unwrap();
        let xs = distinct_codes(&s, 6, 8);
        let limit = sampler.limit_covariance(&xs).unwrap();
        let exact = kernels::gram_symmetric(&iso, &xs).unwrap();
        assert!((limit - exact).abs().max() < 1e-12);
        // anchors on every code make the feature covariance exact
        let all = s.all_codes(6).unwrap();
        let mut full = sampler.clone();
        full.anchors = all;
        full.mode = FeatureMode::RandomPhase { levels: 6, anchors: 64, seed: 0 };
        let cov = full.feature_covariance(&xs).unwrap();
        let exact = kernels::gram_symmetric(&iso, &xs).unwrap();
        assert!((cov - exact).abs().max() < 1e-10);
    }

    #[test]
    fn model_file_round_trip() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let xs = distinct_codes(&s, 6, 5);
        let ys = vec![0.3, -1.0, 2.0, 0.5, 0.0, 1.1];
        let base = IsotropicKernel::new(KernelSpec::matern_offset(1.5, 1.0), 6).unwrap();
        let group = PermSubgroup::symmetric(4);
        let kernel = GpKernel::Invariant(InvariantKernel::exact(base, &s, &group).unwrap());
        let model = GpModel::fit_standardized(kernel, &xs, &ys, 0.01).unwrap();
        let text = serde_json::to_string(&model.to_file().unwrap()).unwrap();
        let back = GpModel::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        let probe = distinct_codes(&s, 3, 6);
        let (a, b) = (model.predict(&probe).unwrap(), back.predict(&probe).unwrap());
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.covariance, b.covariance);
        for (u, v) in back.train_y().iter().zip(&ys) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_samples() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 3);
        let group = PermSubgroup::symmetric(3);
        let pr = Projection::new(&s, &group, Averaging::Exact).unwrap();
        let target = s.code_from_str("001").unwrap();
        let needed = required_inputs(&pr, std::slice::from_ref(&target)).unwrap();
        assert_eq!(needed.len(), 3);
        let constant = DMatrix::from_element(2, 3, 4.0);
        let out = project_posterior_sample(&pr, &needed, &constant, std::slice::from_ref(&target)).unwrap();
        assert!(out.iter().all(|&v| (v - 4.0).abs() < 1e-15));
        let err = project_posterior_sample(&pr, &needed[..2], &constant.columns(0, 2).into_owned(), &[target]).unwrap_err();
        assert!(matches!(err, GraphGpError::MissingInputs(ref v) if v.len() == 1));
    }

    #[test]
    fn posterior_sample_shape_and_determinism() {
        let s = space(GraphSpaceKind::UndirectedNoLoops, 4);
        let xs = distinct_codes(&s, 5, 9);
        let model = GpModel::fit(heat(1.0, 6), &xs, &[1.0, 0.0, -1.0, 0.5, 0.2], 0.01).unwrap();
        let test = distinct_codes(&s, 3, 10);
        let a = posterior_sample(&model, &test, 4, 7).unwrap();
        let b = posterior_sample(&model, &test, 4, 7).unwrap();
        assert_eq!(a.shape(), (4, 3));
        assert_eq!(a, b);
        assert_eq!(sample_prior_exact(model.kernel(), &test, 0, 1).unwrap().nrows(), 0);
    }
}
