//! Φ-kernels on graph spaces.
//!
//! Every isotropic kernel on `{0,1}^d` is a nonnegative combination of the
//! level sums `G_{d,j}`, with the Walsh functions as Laplacian eigenfunctions
//! and eigenvalues `λ_j = 2j` (plain Laplacian) or `2j/d` (normalized ones).
//! Given a spectral function `Φ`, the kernel at Hamming distance `m` is
//!
//! ```text
//! k(m) = σ² Σ_j c_j G'_{d,j,m},   c_j = Φ(λ_j) C(d,j) / Σ_i Φ(λ_i) C(d,i)
//! ```
//!
//! so `k(0) = σ²` and `|k(m)| <= σ²`. The weights `c_j` are computed in log
//! space with a max shift; the final sum tracks the signs of `G'`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GraphGpError, Result};
use crate::graphspace::GraphCode;
use crate::kravchuk::KravchukTable;

/// Which graph Laplacian of the metagraph supplies the eigenvalues.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaplacianVariant {
    /// `D - A`, eigenvalues `2j`.
    #[serde(rename = "plain")]
    Plain,
    /// `I - D^{-1} A`, eigenvalues `2j/d`.
    #[serde(rename = "rw", alias = "random_walk")]
    RandomWalk,
    /// `I - D^{-1/2} A D^{-1/2}`, eigenvalues `2j/d`.
    #[default]
    #[serde(rename = "sym", alias = "symmetric_normalized")]
    SymmetricNormalized,
}

impl LaplacianVariant {
    /// Eigenvalue spacing: `λ_j = j * step(d)`.
    pub fn step(self, d: usize) -> f64 {
        match self {
            LaplacianVariant::Plain => 2.0,
            _ => 2.0 / d as f64,
        }
    }

    pub fn eigenvalue(self, j: usize, d: usize) -> f64 {
        j as f64 * self.step(d)
    }
}

/// Matérn smoothness, either fixed or offset from `d/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nu {
    Fixed(f64),
    /// `ν = d/2 + base`; keeps the kernel from collapsing as `d` grows.
    DimensionOffset(f64),
}

impl Nu {
    pub fn resolve(self, d: usize) -> f64 {
        match self {
            Nu::Fixed(nu) => nu,
            Nu::DimensionOffset(base) => d as f64 / 2.0 + base,
        }
    }

    /// The free parameter: `ν` itself or the offset.
    pub fn parameter(self) -> f64 {
        match self {
            Nu::Fixed(v) | Nu::DimensionOffset(v) => v,
        }
    }

    fn with_parameter(self, v: f64) -> Nu {
        match self {
            Nu::Fixed(_) => Nu::Fixed(v),
            Nu::DimensionOffset(_) => Nu::DimensionOffset(v),
        }
    }
}

/// User-supplied spectral function.
#[derive(Clone)]
pub enum CustomSpectrum {
    /// `Φ(λ)` for arbitrary `λ`.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `Φ(λ_j)` tabulated per level `j = 0..=d`.
    Levels(Vec<f64>),
}

impl CustomSpectrum {
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CustomSpectrum::Function(Arc::new(f))
    }
}

impl fmt::Debug for CustomSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CustomSpectrum::Function(_) => f.write_str("Function(..)"),
            CustomSpectrum::Levels(v) => f.debug_tuple("Levels").field(v).finish(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SpectralFamily {
    /// `Φ(λ) ∝ (2ν/κ² + λ)^{-ν}`.
    Matern { nu: Nu, kappa: f64 },
    /// `Φ(λ) ∝ exp(-κ² λ / 2)`.
    Heat { kappa: f64 },
    Custom(CustomSpectrum),
}

/// A Φ-kernel: spectral family, prior variance, Laplacian and truncation.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub family: SpectralFamily,
    pub variance: f64,
    pub laplacian: LaplacianVariant,
    /// Highest level `j` kept; `None` keeps all `d + 1` levels.
    pub truncation: Option<usize>,
}

/// Hyperparameters with closed-form derivatives of the log spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralParameter {
    LogKappa,
    /// Log of the free Matérn parameter (see [`Nu::parameter`]).
    LogNu,
}

impl KernelSpec {
    pub fn heat(kappa: f64) -> Self {
        Self::with_family(SpectralFamily::Heat { kappa })
    }

    pub fn matern(nu: f64, kappa: f64) -> Self {
        Self::with_family(SpectralFamily::Matern {
            nu: Nu::Fixed(nu),
            kappa,
        })
    }

    /// Matérn with `ν = d/2 + nu_base`.
    pub fn matern_offset(nu_base: f64, kappa: f64) -> Self {
        Self::with_family(SpectralFamily::Matern {
            nu: Nu::DimensionOffset(nu_base),
            kappa,
        })
    }

    pub fn custom(spectrum: CustomSpectrum) -> Self {
        Self::with_family(SpectralFamily::Custom(spectrum))
    }

    fn with_family(family: SpectralFamily) -> Self {
        KernelSpec {
            family,
            variance: 1.0,
            laplacian: LaplacianVariant::default(),
            truncation: None,
        }
    }

    pub fn with_variance(mut self, variance: f64) -> Self {
        self.variance = variance;
        self
    }

    pub fn with_laplacian(mut self, laplacian: LaplacianVariant) -> Self {
        self.laplacian = laplacian;
        self
    }

    pub fn with_truncation(mut self, levels: Option<usize>) -> Self {
        self.truncation = levels;
        self
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.family {
            SpectralFamily::Matern { kappa, .. } | SpectralFamily::Heat { kappa } => Some(kappa),
            SpectralFamily::Custom(_) => None,
        }
    }

    pub fn with_kappa(mut self, value: f64) -> Self {
        match &mut self.family {
            SpectralFamily::Matern { kappa, .. } | SpectralFamily::Heat { kappa } => *kappa = value,
            SpectralFamily::Custom(_) => {}
        }
        self
    }

    pub fn nu(&self) -> Option<Nu> {
        match self.family {
            SpectralFamily::Matern { nu, .. } => Some(nu),
            _ => None,
        }
    }

    pub fn with_nu_parameter(mut self, value: f64) -> Self {
        if let SpectralFamily::Matern { nu, .. } = &mut self.family {
            *nu = nu.with_parameter(value);
        }
        self
    }

    pub fn is_heat(&self) -> bool {
        matches!(self.family, SpectralFamily::Heat { .. })
    }

    /// Parameters this spec exposes to gradient-based tuning.
    pub fn spectral_parameters(&self) -> Vec<SpectralParameter> {
        match self.family {
            SpectralFamily::Matern { .. } => {
                vec![SpectralParameter::LogKappa, SpectralParameter::LogNu]
            }
            SpectralFamily::Heat { .. } => vec![SpectralParameter::LogKappa],
            SpectralFamily::Custom(_) => vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GraphGpError::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("variance", self.variance)?;
        match &self.family {
            SpectralFamily::Matern { nu, kappa } => {
                positive("kappa", *kappa)?;
                match nu {
                    Nu::Fixed(v) => positive("nu", *v)?,
                    Nu::DimensionOffset(v) => positive("nu_base", *v)?,
                }
            }
            SpectralFamily::Heat { kappa } => positive("kappa", *kappa)?,
            SpectralFamily::Custom(CustomSpectrum::Levels(values)) => {
                if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(GraphGpError::invalid(format!(
                        "custom spectrum values must be finite and nonnegative, got {bad}"
                    )));
                }
            }
            SpectralFamily::Custom(CustomSpectrum::Function(_)) => {}
        }
        Ok(())
    }

    /// Level `j` nearest to eigenvalue `lambda`.
    fn level_of(&self, lambda: f64, d: usize) -> usize {
        (lambda / self.laplacian.step(d)).round().max(0.0) as usize
    }

    /// `ln Φ_raw(λ)` before normalization and truncation; `-inf` where `Φ = 0`.
    pub fn log_phi_raw(&self, lambda: f64, d: usize) -> Result<f64> {
        let value = match &self.family {
            SpectralFamily::Heat { kappa } => -kappa * kappa * lambda / 2.0,
            SpectralFamily::Matern { nu, kappa } => {
                let nu = nu.resolve(d);
                -nu * (2.0 * nu / (kappa * kappa) + lambda).ln()
            }
            SpectralFamily::Custom(CustomSpectrum::Function(f)) => {
                let v = f(lambda);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(GraphGpError::invalid(format!(
                        "custom Φ({lambda}) = {v} is not finite and nonnegative"
                    )));
                }
                v.ln()
            }
            SpectralFamily::Custom(CustomSpectrum::Levels(values)) => {
                let j = self.level_of(lambda, d);
                let v = *values.get(j).ok_or_else(|| {
                    GraphGpError::invalid(format!(
                        "custom spectrum lists {} levels but level {j} was requested",
                        values.len()
                    ))
                })?;
                v.ln()
            }
        };
        if value.is_nan() {
            return Err(GraphGpError::invalid(format!("Φ({lambda}) is not a number")));
        }
        Ok(value)
    }

    /// `ln Φ_raw(λ)` with truncation applied.
    pub fn log_phi_truncated(&self, lambda: f64, d: usize) -> Result<f64> {
        match self.truncation {
            Some(levels) if self.level_of(lambda, d) > levels => Ok(f64::NEG_INFINITY),
            _ => self.log_phi_raw(lambda, d),
        }
    }

    /// Derivative of `ln Φ_raw(λ)` with respect to a log-parameter.
    pub fn log_phi_derivative(&self, param: SpectralParameter, lambda: f64, d: usize) -> f64 {
        match (&self.family, param) {
            (SpectralFamily::Heat { kappa }, SpectralParameter::LogKappa) => -kappa * kappa * lambda,
            (SpectralFamily::Matern { nu, kappa }, p) => {
                let k2 = kappa * kappa;
                let v = nu.resolve(d);
                let a = 2.0 * v / k2 + lambda;
                match p {
                    SpectralParameter::LogKappa => 4.0 * v * v / (k2 * a),
                    SpectralParameter::LogNu => {
                        let dl_dnu = -a.ln() - 2.0 * v / (k2 * a);
                        dl_dnu * nu.parameter()
                    }
                }
            }
            _ => 0.0,
        }
    }

    fn retained_levels(&self, d: usize) -> usize {
        self.truncation.map_or(d, |j| j.min(d))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum FamilyRepr {
    Matern {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu_base: Option<f64>,
        kappa: f64,
    },
    Heat {
        kappa: f64,
    },
    Custom {
        phi: Vec<f64>,
    },
}

fn default_variance() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    #[serde(flatten)]
    family: FamilyRepr,
    #[serde(default = "default_variance")]
    variance: f64,
    #[serde(default)]
    laplacian: LaplacianVariant,
    #[serde(default)]
    truncation: Option<usize>,
}

impl Serialize for KernelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let family = match &self.family {
            SpectralFamily::Matern { nu: Nu::Fixed(v), kappa } => FamilyRepr::Matern {
                nu: Some(*v),
                nu_base: None,
                kappa: *kappa,
            },
            SpectralFamily::Matern {
                nu: Nu::DimensionOffset(v),
                kappa,
            } => FamilyRepr::Matern {
                nu: None,
                nu_base: Some(*v),
                kappa: *kappa,
            },
            SpectralFamily::Heat { kappa } => FamilyRepr::Heat { kappa: *kappa },
            SpectralFamily::Custom(CustomSpectrum::Levels(phi)) => FamilyRepr::Custom { phi: phi.clone() },
            SpectralFamily::Custom(CustomSpectrum::Function(_)) => {
                return Err(serde::ser::Error::custom(
                    "closure spectra cannot be serialized; tabulate them per level",
                ))
            }
        };
        SpecRepr {
            family,
            variance: self.variance,
            laplacian: self.laplacian,
            truncation: self.truncation,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SpecRepr::deserialize(deserializer)?;
        let family = match repr.family {
            FamilyRepr::Matern { nu, nu_base, kappa } => {
                let nu = match (nu, nu_base) {
                    (Some(v), None) => Nu::Fixed(v),
                    (None, Some(b)) => Nu::DimensionOffset(b),
                    _ => {
                        return Err(serde::de::Error::custom(
                            "matern spec needs exactly one of `nu` or `nu_base`",
                        ))
                    }
                };
                SpectralFamily::Matern { nu, kappa }
            }
            FamilyRepr::Heat { kappa } => SpectralFamily::Heat { kappa },
            FamilyRepr::Custom { phi } => SpectralFamily::Custom(CustomSpectrum::Levels(phi)),
        };
        let spec = KernelSpec {
            family,
            variance: repr.variance,
            laplacian: repr.laplacian,
            truncation: repr.truncation,
        };
        spec.validate().map_err(serde::de::Error::custom)?;
        Ok(spec)
    }
}

/// Log-weights `ln c_j` of a normalized kernel; the weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector {
    log_weights: Vec<f64>,
}

impl CoefficientVector {
    pub fn d(&self) -> usize {
        self.log_weights.len() - 1
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.log_weights[j].exp()
    }

    /// Whether every level carries positive weight.
    pub fn strictly_positive(&self) -> bool {
        self.log_weights.iter().all(|l| l.is_finite())
    }
}

/// Normalized spectral weights `c_j ∝ Φ(λ_j) C(d,j)`.
pub fn spectral_coefficients(spec: &KernelSpec, d: usize) -> Result<CoefficientVector> {
    let (coefficients, _) = spectral_coefficients_with_normalizer(spec, d)?;
    Ok(coefficients)
}

/// Coefficients plus `ln C`, where `C = Σ_j Φ_raw(λ_j) C(d,j)`.
pub(crate) fn spectral_coefficients_with_normalizer(
    spec: &KernelSpec,
    d: usize,
) -> Result<(CoefficientVector, f64)> {
    spec.validate()?;
    if d == 0 {
        return Err(GraphGpError::invalid("kernels need d >= 1"));
    }
    let table = KravchukTable::shared(d)?;
    let keep = spec.retained_levels(d);
    let mut logs = Vec::with_capacity(d + 1);
    for j in 0..=d {
        if j > keep {
            logs.push(f64::NEG_INFINITY);
            continue;
        }
        let lambda = spec.laplacian.eigenvalue(j, d);
        logs.push(spec.log_phi_raw(lambda, d)? + table.log_binoms()[j]);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(GraphGpError::DegenerateKernel(
            "Φ vanishes on every retained level".into(),
        ));
    }
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let log_weights = logs.iter().map(|l| l - lse).collect();
    Ok((CoefficientVector { log_weights }, lse))
}

/// Sum of signed terms given as `(negative, ln|term|)`, shifted by the largest
/// magnitude before exponentiation.
fn signed_log_sum(terms: &[(bool, f64)]) -> f64 {
    let max = terms
        .iter()
        .map(|t| t.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let mantissa: f64 = terms
        .iter()
        .map(|&(neg, l)| {
            let v = (l - max).exp();
            if neg {
                -v
            } else {
                v
            }
        })
        .sum();
    mantissa * max.exp()
}

fn level_sum(coefficients: &CoefficientVector, table: &KravchukTable, m: usize) -> f64 {
    let terms: Vec<(bool, f64)> = coefficients
        .log_weights
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(j, &l)| {
            let g = table.normalized_unchecked(j, m);
            (g < 0.0, l + g.abs().ln())
        })
        .collect();
    signed_log_sum(&terms)
}

/// `k(m) = σ² Σ_j c_j G'_{d,j,m}`.
pub fn evaluate(spec: &KernelSpec, table: &KravchukTable, m: usize) -> Result<f64> {
    let d = table.d();
    if m > d {
        return Err(GraphGpError::OutOfRange {
            what: "distance m",
            index: m,
            bound: d + 1,
        });
    }
    let coefficients = spectral_coefficients(spec, d)?;
    if m == 0 {
        return Ok(spec.variance);
    }
    Ok(spec.variance * level_sum(&coefficients, table, m) / level_sum(&coefficients, table, 0))
}

/// Heat kernel on the hypercube with the plain Laplacian: `σ² tanh(κ²/2)^m`.
pub fn heat_closed_form(kappa: f64, sigma2: f64, m: usize) -> Result<f64> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(GraphGpError::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(GraphGpError::invalid(format!("variance must be positive, got {sigma2}")));
    }
    Ok(sigma2 * (kappa * kappa / 2.0).tanh().powi(m as i32))
}

/// A covariance function on graph codes.
pub trait Covariance: Send + Sync {
    fn covariance(&self, x: &GraphCode, y: &GraphCode) -> Result<f64>;
}

fn check_one_space(xs: &[GraphCode], ys: &[GraphCode]) -> Result<()> {
    if let Some(first) = xs.first().or(ys.first()) {
        for c in xs.iter().chain(ys) {
            if c.space_key() != first.space_key() || c.len() != first.len() {
                return Err(GraphGpError::SpaceMismatch {
                    left: first.space_key(),
                    right: c.space_key(),
                });
            }
        }
    }
    Ok(())
}

/// `(K)_{ij} = k(xs_i, ys_j)`, rows filled in parallel.
pub fn gram<K: Covariance + ?Sized>(kernel: &K, xs: &[GraphCode], ys: &[GraphCode]) -> Result<DMatrix<f64>> {
    check_one_space(xs, ys)?;
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| ys.iter().map(|y| kernel.covariance(x, y)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| rows[i][j]))
}

/// Symmetric Gram matrix of one point set; only the upper triangle is evaluated.
pub fn gram_symmetric<K: Covariance + ?Sized>(kernel: &K, xs: &[GraphCode]) -> Result<DMatrix<f64>> {
    check_one_space(xs, &[])?;
    let n = xs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| kernel.covariance(&xs[i], &xs[j])).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            k[(i, i + off)] = v;
            k[(i + off, i)] = v;
        }
    }
    Ok(k)
}

/// Weights over Hamming distances: `k(x, y) = Σ w_m k(m)`.
///
/// An isotropic kernel puts all mass on `|x ∔ y|`; averaged kernels spread it
/// over the distances between permuted copies.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceWeights {
    entries: Vec<(u32, f64)>,
}

impl DistanceWeights {
    pub fn single(m: usize) -> Self {
        DistanceWeights {
            entries: vec![(m as u32, 1.0)],
        }
    }

    /// From counts per distance, normalized by `total`.
    pub fn from_histogram(counts: &[u64], total: f64) -> Self {
        DistanceWeights {
            entries: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(m, &c)| (m as u32, c as f64 / total))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    #[inline]
    pub fn contract(&self, profile: &[f64]) -> f64 {
        self.entries.iter().map(|&(m, w)| w * profile[m as usize]).sum()
    }
}

/// An isotropic kernel on a space of dimension `d`, with its distance profile
/// `k(0..=d)` precomputed.
#[derive(Clone, Debug)]
pub struct IsotropicKernel {
    spec: KernelSpec,
    d: usize,
    coefficients: CoefficientVector,
    log_normalizer: f64,
    table: Arc<KravchukTable>,
    profile: Vec<f64>,
}

impl IsotropicKernel {
    pub fn new(spec: KernelSpec, d: usize) -> Result<Self> {
        let (coefficients, log_normalizer) = spectral_coefficients_with_normalizer(&spec, d)?;
        let table = KravchukTable::shared(d)?;
        let at_zero = level_sum(&coefficients, &table, 0);
        let profile = (0..=d)
            .map(|m| {
                if m == 0 {
                    spec.variance
                } else {
                    spec.variance * level_sum(&coefficients, &table, m) / at_zero
                }
            })
            .collect();
        Ok(IsotropicKernel {
            spec,
            d,
            coefficients,
            log_normalizer,
            table,
            profile,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn variance(&self) -> f64 {
        self.spec.variance
    }

    pub fn coefficients(&self) -> &CoefficientVector {
        &self.coefficients
    }

    pub fn table(&self) -> &Arc<KravchukTable> {
        &self.table
    }

    /// `k(m)` for `m = 0..=d`.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn at_distance(&self, m: usize) -> Result<f64> {
        self.profile.get(m).copied().ok_or(GraphGpError::OutOfRange {
            what: "distance m",
            index: m,
            bound: self.d + 1,
        })
    }

    /// Level-`j` contribution `σ² c_j G'_{d,j,m}`.
    pub fn component(&self, j: usize, m: usize) -> Result<f64> {
        let g = self.table.normalized(j, m)?;
        Ok(self.spec.variance * self.coefficients.weight(j) * g)
    }

    /// The same kernel with another spec on the same dimension.
    pub fn with_spec(&self, spec: KernelSpec) -> Result<Self> {
        IsotropicKernel::new(spec, self.d)
    }

    /// `Φ(λ)` scaled as in the orthonormal-eigenvector expansion on all
    /// `2^d` graphs: `k(x, y) = Σ_i Φ(λ_i) f_i(x) f_i(y)` with unit-norm `f_i`.
    pub fn spectral_density(&self, lambda: f64) -> Result<f64> {
        let l = self.spec.log_phi_truncated(lambda, self.d)?;
        Ok(self.spec.variance
            * (l + self.d as f64 * std::f64::consts::LN_2 - self.log_normalizer).exp())
    }

    /// `∂k(m)/∂θ` for every `m`, with `θ` a log-parameter of the spectrum.
    pub fn profile_derivative(&self, param: SpectralParameter) -> Vec<f64> {
        let d = self.d;
        let weights = self.coefficients.weights();
        let dl: Vec<f64> = (0..=d)
            .map(|j| {
                if weights[j] > 0.0 {
                    let lambda = self.spec.laplacian.eigenvalue(j, d);
                    self.spec.log_phi_derivative(param, lambda, d)
                } else {
                    0.0
                }
            })
            .collect();
        let mean: f64 = weights.iter().zip(&dl).map(|(w, g)| w * g).sum();
        (0..=d)
            .map(|m| {
                let s: f64 = (0..=d)
                    .filter(|&j| weights[j] > 0.0)
                    .map(|j| weights[j] * (dl[j] - mean) * self.table.normalized_unchecked(j, m))
                    .sum();
                self.spec.variance * s
            })
            .collect()
    }
}

impl Covariance for IsotropicKernel {
    fn covariance(&self, x: &GraphCode, y: &GraphCode) -> Result<f64> {
        let m = x.hamming(y)?;
        self.at_distance(m)
    }
}

/// Baseline `σ² (⟨x, y⟩ + 1)` on edge indicator vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearKernel {
    pub variance: f64,
}

impl LinearKernel {
    pub fn inner(x: &GraphCode, y: &GraphCode) -> Result<f64> {
        if x.space_key() != y.space_key() {
            return Err(GraphGpError::SpaceMismatch {
                left: x.space_key(),
                right: y.space_key(),
            });
        }
        let shared: u32 = x
            .words()
            .iter()
            .zip(y.words())
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(shared as f64 + 1.0)
    }
}

impl Covariance for LinearKernel {
    fn covariance(&self, x: &GraphCode, y: &GraphCode) -> Result<f64> {
        Ok(self.variance * Self::inner(x, y)?)
    }
}
