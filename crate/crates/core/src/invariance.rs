//! Node-permutation subgroups, orbits and H-invariant kernels.
//!
//! `H` is always a direct product of full symmetric groups on disjoint node
//! blocks. Exact computations enumerate `H` and are capped; the Monte Carlo
//! kernel averages over one shared sample `S` on both arguments, which keeps
//! every Gram matrix positive semidefinite.

use std::collections::{HashMap, HashSet};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GraphGpError, Result};
use crate::graphspace::{GraphCode, GraphSpace, NodePermutation, SlotPermutation};
use crate::kernels::{Covariance, DistanceWeights, IsotropicKernel, LaplacianVariant};
use crate::seed;

/// Largest `|H|` enumerated by exact operations.
pub const DEFAULT_GROUP_CAP: f64 = 5e6;

/// Largest `d` for which all `2^d` codes are enumerated.
pub const QUOTIENT_MAX_D: usize = 16;

/// Tolerance, relative to `σ²`, of the kernel orbit-equivalence test.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Sym(B_1) × … × Sym(B_r)` for disjoint node blocks covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermSubgroup {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl PermSubgroup {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut blocks: Vec<Vec<usize>> = blocks.into_iter().filter(|b| !b.is_empty()).collect();
        for block in &mut blocks {
            block.sort_unstable();
            for &v in block.iter() {
                if v >= n {
                    return Err(GraphGpError::OutOfRange {
                        what: "block node",
                        index: v,
                        bound: n,
                    });
                }
                if seen[v] {
                    return Err(GraphGpError::invalid(format!("node {v} appears in two blocks")));
                }
                seen[v] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(GraphGpError::invalid(format!("node {missing} is in no block")));
        }
        blocks.sort_unstable();
        Ok(PermSubgroup { n, blocks })
    }

    /// The group containing only the identity.
    pub fn trivial(n: usize) -> Self {
        PermSubgroup {
            n,
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// `Sym_n`.
    pub fn symmetric(n: usize) -> Self {
        PermSubgroup {
            n,
            blocks: if n == 0 { vec![] } else { vec![(0..n).collect()] },
        }
    }

    /// Parses `"0,1,2|3"`. Nodes not mentioned become singleton blocks.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut listed = HashSet::new();
        for part in text.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            let block = part
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| GraphGpError::invalid(format!("bad node '{v}' in blocks '{text}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            listed.extend(block.iter().copied());
            blocks.push(block);
        }
        blocks.extend((0..n).filter(|v| !listed.contains(v)).map(|v| vec![v]));
        Self::new(n, blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// `|H| = Π |B|!`.
    pub fn order(&self) -> f64 {
        self.blocks.iter().map(|b| factorial(b.len())).product()
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    /// `|H|` as an integer, or a refusal when it exceeds `cap`.
    pub fn checked_order(&self, cap: f64) -> Result<u64> {
        let order = self.order();
        if order > cap {
            return Err(GraphGpError::EnumerationCap {
                what: format!("the group with blocks {self}"),
                size: order,
                cap,
            });
        }
        Ok(order as u64)
    }

    /// Element number `index` in mixed-radix Lehmer order, `index < |H|`.
    pub fn element(&self, mut index: u64) -> NodePermutation {
        let mut mapping: Vec<usize> = (0..self.n).collect();
        for block in &self.blocks {
            let b = block.len();
            let radix = factorial(b) as u64;
            let mut local = index % radix;
            index /= radix;
            let mut available = block.clone();
            for (pos, &node) in block.iter().enumerate() {
                let f = factorial(b - 1 - pos) as u64;
                let q = (local / f) as usize;
                local %= f;
                mapping[node] = available.remove(q);
            }
        }
        NodePermutation::new(mapping).expect("block permutations form a bijection")
    }

    pub fn elements(&self, cap: f64) -> Result<Vec<NodePermutation>> {
        let order = self.checked_order(cap)?;
        Ok((0..order).map(|i| self.element(i)).collect())
    }

    /// Uniform draw: an independent shuffle of every block.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodePermutation {
        let mut mapping: Vec<usize> = (0..self.n).collect();
        for block in &self.blocks {
            let mut images = block.clone();
            images.shuffle(rng);
            for (&from, &to) in block.iter().zip(&images) {
                mapping[from] = to;
            }
        }
        NodePermutation::new(mapping).expect("block permutations form a bijection")
    }

    pub fn contains(&self, sigma: &NodePermutation) -> bool {
        sigma.len() == self.n
            && self
                .blocks
                .iter()
                .all(|b| b.iter().all(|&v| b.binary_search(&sigma.image(v)).is_ok()))
    }

    fn check_space(&self, space: &GraphSpace) -> Result<()> {
        if space.n() != self.n {
            return Err(GraphGpError::invalid(format!(
                "group acts on {} nodes but the space {} has {}",
                self.n,
                space.key(),
                space.n()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for PermSubgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        f.write_str(&parts.join("|"))
    }
}

/// An equivalence class `x̄` under `H`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitClass {
    /// Lexicographically smallest member.
    pub canonical: GraphCode,
    pub size: usize,
    pub members: Option<Vec<GraphCode>>,
}

impl OrbitClass {
    /// `ψ(x̄) = √|x̄|`.
    pub fn psi(&self) -> f64 {
        (self.size as f64).sqrt()
    }
}

/// Sorted orbit of `x`, enumerating `H` in parallel.
pub fn orbit_members(space: &GraphSpace, group: &PermSubgroup, x: &GraphCode, cap: f64) -> Result<Vec<GraphCode>> {
    group.check_space(space)?;
    space.check(x)?;
    let order = group.checked_order(cap)?;
    let set = (0..order)
        .into_par_iter()
        .fold(HashSet::new, |mut acc, i| {
            let sigma = group.element(i);
            acc.insert(space.edge_permutation(&sigma).expect("sizes checked").apply(x));
            acc
        })
        .reduce(HashSet::new, |mut a, b| {
            if a.len() < b.len() {
                return b.into_iter().chain(a).collect();
            }
            a.extend(b);
            a
        });
    let mut members: Vec<GraphCode> = set.into_iter().collect();
    members.sort();
    Ok(members)
}

pub fn enumerate_orbit(space: &GraphSpace, group: &PermSubgroup, x: &GraphCode) -> Result<OrbitClass> {
    let members = orbit_members(space, group, x, DEFAULT_GROUP_CAP)?;
    Ok(OrbitClass {
        canonical: members[0].clone(),
        size: members.len(),
        members: Some(members),
    })
}

/// Whether `x ∼_H y`, decided by brute force.
pub fn same_orbit(space: &GraphSpace, group: &PermSubgroup, x: &GraphCode, y: &GraphCode) -> Result<bool> {
    space.check(y)?;
    Ok(orbit_members(space, group, x, DEFAULT_GROUP_CAP)?.binary_search(y).is_ok())
}

/// How the average over `H` is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Averaging {
    /// Full group, single average `|H|^{-1} Σ_σ k(σx, y)`.
    Exact,
    /// Double average over one i.i.d. uniform sample `S` of size `samples`.
    MonteCarlo { samples: usize, seed: u64 },
    /// Double average with `S = H`, every element once.
    Enumerated,
}

/// The averaging operator `(Pr f)(x) = |S|^{-1} Σ_{σ∈S} f(σx)` with `S = H`
/// or a sample of `H`.
#[derive(Clone, Debug)]
pub struct Projection {
    space: GraphSpace,
    group: PermSubgroup,
    averaging: Averaging,
    // S for the sampled and enumerated modes
    perms: Vec<SlotPermutation>,
}

impl Projection {
    pub fn new(space: &GraphSpace, group: &PermSubgroup, averaging: Averaging) -> Result<Self> {
        group.check_space(space)?;
        let perms = match averaging {
            Averaging::Exact => {
                group.checked_order(DEFAULT_GROUP_CAP)?;
                Vec::new()
            }
            Averaging::Enumerated => group
                .elements(DEFAULT_GROUP_CAP)?
                .iter()
                .map(|s| space.edge_permutation(s))
                .collect::<Result<_>>()?,
            Averaging::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(GraphGpError::invalid("Monte Carlo averaging needs at least one sample"));
                }
                let mut rng = seed::rng(seed);
                (0..samples)
                    .map(|_| space.edge_permutation(&group.sample(&mut rng)))
                    .collect::<Result<_>>()?
            }
        };
        Ok(Projection {
            space: space.clone(),
            group: group.clone(),
            averaging,
            perms,
        })
    }

    /// A projection averaging over an explicit permutation sample.
    pub fn from_sample(space: &GraphSpace, group: &PermSubgroup, sample: &[NodePermutation]) -> Result<Self> {
        group.check_space(space)?;
        if sample.is_empty() {
            return Err(GraphGpError::invalid("permutation sample is empty"));
        }
        if let Some(bad) = sample.iter().find(|s| !group.contains(s)) {
            return Err(GraphGpError::invalid(format!("{:?} is not in the group {group}", bad.mapping())));
        }
        Ok(Projection {
            space: space.clone(),
            group: group.clone(),
            averaging: Averaging::MonteCarlo {
                samples: sample.len(),
                seed: 0,
            },
            perms: sample.iter().map(|s| space.edge_permutation(s)).collect::<Result<_>>()?,
        })
    }

    pub fn space(&self) -> &GraphSpace {
        &self.space
    }

    pub fn group(&self) -> &PermSubgroup {
        &self.group
    }

    pub fn averaging(&self) -> Averaging {
        self.averaging
    }

    /// The codes averaged over at `x`. Exact mode lists the orbit once per
    /// member, which gives the same average as the group with multiplicities.
    pub fn images(&self, x: &GraphCode) -> Result<Vec<GraphCode>> {
        self.space.check(x)?;
        match self.averaging {
            Averaging::Exact => orbit_members(&self.space, &self.group, x, DEFAULT_GROUP_CAP),
            _ => Ok(self.perms.iter().map(|p| p.apply(x)).collect()),
        }
    }

    /// `(Pr f)(x)`.
    pub fn apply_fn(&self, f: impl Fn(&GraphCode) -> f64, x: &GraphCode) -> Result<f64> {
        let images = self.images(x)?;
        Ok(images.iter().map(f).sum::<f64>() / images.len() as f64)
    }

    /// `Pr f` for `f` tabulated over all `2^d` codes in index order.
    pub fn apply_table(&self, values: &[f64]) -> Result<Vec<f64>> {
        let d = self.space.d();
        if d > QUOTIENT_MAX_D || values.len() != 1usize << d {
            return Err(GraphGpError::invalid(format!(
                "function table must list all 2^{d} codes (d <= {QUOTIENT_MAX_D}), got {} values",
                values.len()
            )));
        }
        let codes = self.space.all_codes(QUOTIENT_MAX_D)?;
        codes
            .par_iter()
            .map(|x| self.apply_fn(|z| values[z.as_index().expect("d <= 64") as usize], x))
            .collect()
    }
}

/// A code together with the codes its kernel row averages over.
#[derive(Clone, Debug)]
pub struct PreparedCode {
    code: GraphCode,
    images: Vec<GraphCode>,
}

/// `k_{/H}`: an isotropic kernel averaged over a permutation group.
#[derive(Clone, Debug)]
pub struct InvariantKernel {
    base: IsotropicKernel,
    projection: Projection,
}

impl InvariantKernel {
    pub fn new(base: IsotropicKernel, projection: Projection) -> Result<Self> {
        if base.d() != projection.space.d() {
            return Err(GraphGpError::invalid(format!(
                "kernel has d = {} but the space {} has d = {}",
                base.d(),
                projection.space.key(),
                projection.space.d()
            )));
        }
        Ok(InvariantKernel { base, projection })
    }

    pub fn exact(base: IsotropicKernel, space: &GraphSpace, group: &PermSubgroup) -> Result<Self> {
        Self::new(base, Projection::new(space, group, Averaging::Exact)?)
    }

    pub fn monte_carlo(
        base: IsotropicKernel,
        space: &GraphSpace,
        group: &PermSubgroup,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::new(base, Projection::new(space, group, Averaging::MonteCarlo { samples, seed })?)
    }

    pub fn base(&self) -> &IsotropicKernel {
        &self.base
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    /// Same averaging, new base kernel.
    pub fn with_base(&self, base: IsotropicKernel) -> Result<Self> {
        Self::new(base, self.projection.clone())
    }

    pub fn prepare(&self, x: &GraphCode) -> Result<PreparedCode> {
        Ok(PreparedCode {
            code: x.clone(),
            images: self.projection.images(x)?,
        })
    }

    pub fn prepare_all(&self, xs: &[GraphCode]) -> Result<Vec<PreparedCode>> {
        xs.par_iter().map(|x| self.prepare(x)).collect()
    }

    /// Distribution of the Hamming distances the average runs over.
    pub fn weights_prepared(&self, x: &PreparedCode, y: &PreparedCode) -> DistanceWeights {
        let mut counts = vec![0u64; self.base.d() + 1];
        match self.projection.averaging {
            Averaging::Exact => {
                for a in &x.images {
                    counts[a.hamming_unchecked(&y.code)] += 1;
                }
            }
            _ => {
                for a in &x.images {
                    for b in &y.images {
                        counts[a.hamming_unchecked(b)] += 1;
                    }
                }
            }
        }
        let total: u64 = counts.iter().sum();
        DistanceWeights::from_histogram(&counts, total as f64)
    }

    pub fn distance_weights(&self, x: &GraphCode, y: &GraphCode) -> Result<DistanceWeights> {
        if x.space_key() != y.space_key() {
            return Err(GraphGpError::SpaceMismatch {
                left: x.space_key(),
                right: y.space_key(),
            });
        }
        Ok(self.weights_prepared(&self.prepare(x)?, &self.prepare(y)?))
    }

    pub fn evaluate(&self, x: &GraphCode, y: &GraphCode) -> Result<f64> {
        Ok(self.distance_weights(x, y)?.contract(self.base.profile()))
    }

    /// Row-major distance weights for all pairs in `xs × ys`.
    pub fn pair_weights(&self, xs: &[PreparedCode], ys: &[PreparedCode]) -> Vec<DistanceWeights> {
        xs.par_iter()
            .flat_map_iter(|x| ys.iter().map(move |y| self.weights_prepared(x, y)))
            .collect()
    }

    pub fn gram(&self, xs: &[GraphCode], ys: &[GraphCode]) -> Result<DMatrix<f64>> {
        let (px, py) = (self.prepare_all(xs)?, self.prepare_all(ys)?);
        let w = self.pair_weights(&px, &py);
        let profile = self.base.profile();
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            w[i * ys.len() + j].contract(profile)
        }))
    }

    pub fn gram_symmetric(&self, xs: &[GraphCode]) -> Result<DMatrix<f64>> {
        let px = self.prepare_all(xs)?;
        let n = xs.len();
        let profile = self.base.profile();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| self.weights_prepared(&px[i], &px[j]).contract(profile)).collect())
            .collect();
        let mut k = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                k[(i, i + off)] = v;
                k[(i + off, i)] = v;
            }
        }
        Ok(k)
    }
}

impl Covariance for InvariantKernel {
    fn covariance(&self, x: &GraphCode, y: &GraphCode) -> Result<f64> {
        self.evaluate(x, y)
    }
}

/// Exact `k_{/H}(x, y)`.
pub fn invariant_kernel_exact(
    base: &IsotropicKernel,
    space: &GraphSpace,
    group: &PermSubgroup,
    x: &GraphCode,
    y: &GraphCode,
) -> Result<f64> {
    InvariantKernel::exact(base.clone(), space, group)?.evaluate(x, y)
}

/// Monte Carlo `k_{/H}(x, y)` with a shared sample of `sample_size` elements.
pub fn invariant_kernel_mc(
    base: &IsotropicKernel,
    space: &GraphSpace,
    group: &PermSubgroup,
    x: &GraphCode,
    y: &GraphCode,
    sample_size: usize,
    seed: u64,
) -> Result<f64> {
    InvariantKernel::monte_carlo(base.clone(), space, group, sample_size, seed)?.evaluate(x, y)
}

/// Decides `x ∼_H y` through `k_{/H}(x,y) = (k_{/H}(x,x) + k_{/H}(y,y)) / 2`,
/// which characterizes equivalence when `Φ > 0` on every level.
pub fn orbit_equivalence_test(
    base: &IsotropicKernel,
    space: &GraphSpace,
    group: &PermSubgroup,
    x: &GraphCode,
    y: &GraphCode,
) -> Result<bool> {
    if !base.coefficients().strictly_positive() {
        return Err(GraphGpError::invalid(
            "the equivalence test needs a strictly positive spectrum on every level",
        ));
    }
    let kernel = InvariantKernel::exact(base.clone(), space, group)?;
    let (px, py) = (kernel.prepare(x)?, kernel.prepare(y)?);
    let profile = base.profile();
    let kxy = kernel.weights_prepared(&px, &py).contract(profile);
    let kxx = kernel.weights_prepared(&px, &px).contract(profile);
    let kyy = kernel.weights_prepared(&py, &py).contract(profile);
    Ok((kxy - (kxx + kyy) / 2.0).abs() <= EQUIVALENCE_TOLERANCE * base.variance())
}

/// The metagraph folded along the orbits of `H`; weights count metagraph
/// edges between classes.
#[derive(Clone, Debug)]
pub struct QuotientGraph {
    space: GraphSpace,
    group: PermSubgroup,
    classes: Vec<OrbitClass>,
    class_of: Vec<u32>,
    weights: DMatrix<f64>,
}

impl QuotientGraph {
    pub fn build(space: &GraphSpace, group: &PermSubgroup) -> Result<Self> {
        Self::build_with_cap(space, group, QUOTIENT_MAX_D)
    }

    pub fn build_with_cap(space: &GraphSpace, group: &PermSubgroup, max_d: usize) -> Result<Self> {
        group.check_space(space)?;
        let d = space.d();
        let codes = space.all_codes(max_d)?;
        let perms: Vec<SlotPermutation> = group
            .elements(DEFAULT_GROUP_CAP)?
            .iter()
            .map(|s| space.edge_permutation(s))
            .collect::<Result<_>>()?;
        let unassigned = u32::MAX;
        let mut class_of = vec![unassigned; codes.len()];
        let mut found: Vec<Vec<GraphCode>> = Vec::new();
        for x in &codes {
            let idx = x.as_index().expect("d <= 16") as usize;
            if class_of[idx] != unassigned {
                continue;
            }
            let mut members: Vec<GraphCode> = perms.iter().map(|p| p.apply(x)).collect();
            members.sort();
            members.dedup();
            for m in &members {
                class_of[m.as_index().expect("d <= 16") as usize] = found.len() as u32;
            }
            found.push(members);
        }
        // order classes by canonical member
        let mut order: Vec<usize> = (0..found.len()).collect();
        order.sort_by(|&a, &b| found[a][0].cmp(&found[b][0]));
        let mut rank = vec![0u32; found.len()];
        for (r, &c) in order.iter().enumerate() {
            rank[c] = r as u32;
        }
        for c in class_of.iter_mut() {
            *c = rank[*c as usize];
        }
        let classes: Vec<OrbitClass> = order
            .into_iter()
            .map(|c| {
                let members = std::mem::take(&mut found[c]);
                OrbitClass {
                    canonical: members[0].clone(),
                    size: members.len(),
                    members: Some(members),
                }
            })
            .collect();
        let k = classes.len();
        let mut weights = DMatrix::zeros(k, k);
        for idx in 0..codes.len() {
            let a = class_of[idx] as usize;
            for s in 0..d {
                let b = class_of[idx ^ (1usize << s)] as usize;
                weights[(a, b)] += 1.0;
            }
        }
        Ok(QuotientGraph {
            space: space.clone(),
            group: group.clone(),
            classes,
            class_of,
            weights,
        })
    }

    pub fn space(&self) -> &GraphSpace {
        &self.space
    }

    pub fn group(&self) -> &PermSubgroup {
        &self.group
    }

    pub fn classes(&self) -> &[OrbitClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn class_of(&self, x: &GraphCode) -> Result<usize> {
        self.space.check(x)?;
        Ok(self.class_of[x.as_index().expect("d <= 16") as usize] as usize)
    }

    /// Every member of a class has the same number of metagraph neighbours
    /// in every class.
    pub fn is_equitable(&self) -> bool {
        let k = self.len();
        let d = self.space.d();
        (0..self.class_of.len()).all(|idx| {
            let a = self.class_of[idx] as usize;
            let mut deg = vec![0usize; k];
            for s in 0..d {
                deg[self.class_of[idx ^ (1usize << s)] as usize] += 1;
            }
            let size = self.classes[a].size as f64;
            (0..k).all(|b| (deg[b] as f64 * size - self.weights[(a, b)]).abs() < 0.5)
        })
    }

    /// `I - D^{-1/2} W D^{-1/2}` with class degrees `D_A = d |A|`.
    pub fn symmetric_laplacian(&self) -> DMatrix<f64> {
        let d = self.space.d() as f64;
        let k = self.len();
        let scale: Vec<f64> = self.classes.iter().map(|c| 1.0 / (d * c.size as f64).sqrt()).collect();
        DMatrix::from_fn(k, k, |a, b| {
            let off = self.weights[(a, b)] * scale[a] * scale[b];
            if a == b {
                1.0 - off
            } else {
                -off
            }
        })
    }

    /// The Φ-kernel of the quotient graph, `Σ_i Φ(μ_i) g_i g_iᵀ`, using the
    /// spectral normalization of the full space.
    pub fn phi_kernel(&self, kernel: &IsotropicKernel) -> Result<DMatrix<f64>> {
        if kernel.spec().laplacian != LaplacianVariant::SymmetricNormalized {
            return Err(GraphGpError::invalid(
                "quotient kernels are defined for the symmetric normalized Laplacian only",
            ));
        }
        if kernel.d() != self.space.d() {
            return Err(GraphGpError::invalid(format!(
                "kernel has d = {} but the quotient was built on d = {}",
                kernel.d(),
                self.space.d()
            )));
        }
        let eig = SymmetricEigen::new(self.symmetric_laplacian());
        let phi = eig
            .eigenvalues
            .iter()
            .map(|&mu| kernel.spectral_density(mu.clamp(0.0, 2.0)))
            .collect::<Result<Vec<_>>>()?;
        let v = &eig.eigenvectors;
        let k = self.len();
        Ok(DMatrix::from_fn(k, k, |a, b| {
            (0..k).map(|i| phi[i] * v[(a, i)] * v[(b, i)]).sum()
        }))
    }

    /// `k_{/H}` between representatives of every pair of classes:
    /// `k_Φ(x̄, ȳ) / (ψ(x̄) ψ(ȳ))`.
    pub fn invariant_kernel_matrix(&self, kernel: &IsotropicKernel) -> Result<DMatrix<f64>> {
        let phi = self.phi_kernel(kernel)?;
        let psi: Vec<f64> = self.classes.iter().map(OrbitClass::psi).collect();
        Ok(DMatrix::from_fn(self.len(), self.len(), |a, b| phi[(a, b)] / (psi[a] * psi[b])))
    }

    pub fn quotient_kernel(&self, kernel: &IsotropicKernel, i: usize, j: usize) -> Result<f64> {
        for idx in [i, j] {
            if idx >= self.len() {
                return Err(GraphGpError::OutOfRange {
                    what: "class",
                    index: idx,
                    bound: self.len(),
                });
            }
        }
        Ok(self.invariant_kernel_matrix(kernel)?[(i, j)])
    }

    pub fn to_json(&self) -> serde_json::Value {
        let classes: Vec<serde_json::Value> = self
            .classes
            .iter()
            .map(|c| {
                serde_json::json!({
                    "canonical": c.canonical.to_string(),
                    "edges": self.space.edges(&c.canonical).unwrap_or_default(),
                    "size": c.size,
                })
            })
            .collect();
        let weights: Vec<Vec<u64>> = (0..self.len())
            .map(|a| (0..self.len()).map(|b| self.weights[(a, b)] as u64).collect())
            .collect();
        serde_json::json!({
            "space": self.space.key(),
            "blocks": self.group.to_string(),
            "classes": classes,
            "weights": weights,
        })
    }
}

/// Group elements tallied by image, for orbit–stabilizer checks.
pub fn stabilizer_size(space: &GraphSpace, group: &PermSubgroup, x: &GraphCode) -> Result<u64> {
    let order = group.checked_order(DEFAULT_GROUP_CAP)?;
    let mut tally: HashMap<GraphCode, u64> = HashMap::new();
    for i in 0..order {
        *tally.entry(space.apply(&group.element(i), x)?).or_default() += 1;
    }
    Ok(tally[x])
}
