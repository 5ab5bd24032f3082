//! Molecules as graphs: loading, encoding, splits and metrics.
//!
//! Only heavy atoms become nodes; hydrogens are dropped and bond orders are
//! collapsed to single unweighted edges. Graph-A reserves a block of nodes
//! per element type, so relabelling within a block is the natural symmetry;
//! Graph-B places atoms on nodes `0, 1, 2, …` in file order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GraphGpError, Result};
use crate::gp::{self, GpKernel, GpModel};
use crate::graphspace::{GraphCode, GraphSpace, GraphSpaceKind};
use crate::invariance::PermSubgroup;
use crate::seed;

pub const HYDROGEN: &str = "H";

/// One record of a JSON-lines dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    #[serde(default)]
    pub id: String,
    pub atoms: Vec<String>,
    #[serde(default)]
    pub bonds: Vec<[usize; 2]>,
    pub target: f64,
}

/// Heavy-atom skeleton of a molecule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub atoms: Vec<String>,
    /// Sorted, unique, `i < j`.
    pub bonds: Vec<(usize, usize)>,
}

impl Molecule {
    fn label(&self) -> String {
        if self.id.is_empty() {
            "<unnamed>".into()
        } else {
            self.id.clone()
        }
    }

    fn fail(&self, reason: impl Into<String>) -> GraphGpError {
        GraphGpError::Encoding {
            molecule: self.label(),
            reason: reason.into(),
        }
    }

    /// Drops hydrogens, renumbers the rest and collapses repeated bonds.
    pub fn skeleton(&self) -> Result<Skeleton> {
        let mut index = vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if a != HYDROGEN {
                index[i] = atoms.len();
                atoms.push(a.clone());
            }
        }
        let mut bonds = BTreeSet::new();
        for &[a, b] in &self.bonds {
            if a >= self.atoms.len() || b >= self.atoms.len() {
                return Err(self.fail(format!("bond [{a}, {b}] refers to a missing atom")));
            }
            if a == b {
                return Err(self.fail(format!("atom {a} is bonded to itself")));
            }
            let (i, j) = (index[a], index[b]);
            if i != usize::MAX && j != usize::MAX {
                bonds.insert((i.min(j), i.max(j)));
            }
        }
        Ok(Skeleton {
            atoms,
            bonds: bonds.into_iter().collect(),
        })
    }

    /// Heavy-atom counts per element.
    pub fn composition(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for a in self.atoms.iter().filter(|a| *a != HYDROGEN) {
            *counts.entry(a.clone()).or_default() += 1;
        }
        counts
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| *a != HYDROGEN).count()
    }
}

pub fn parse_molecules(text: &str, context: &str) -> Result<Vec<Molecule>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| GraphGpError::json(format!("{context} line {}", i + 1), e)))
        .collect()
}

pub fn load_molecules(path: &Path) -> Result<Vec<Molecule>> {
    let text = std::fs::read_to_string(path).map_err(|e| GraphGpError::io(path, e))?;
    parse_molecules(&text, &path.display().to_string())
}

pub fn molecules_to_jsonl(molecules: &[Molecule]) -> String {
    molecules
        .iter()
        .map(|m| serde_json::to_string(m).expect("molecules serialize") + "\n")
        .collect()
}

/// How atoms are assigned to nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// A block of `count` nodes per element, in the listed order.
    GraphA { type_slots: Vec<(String, usize)> },
    /// Atoms on nodes `0, 1, …`; `n` defaults to the largest molecule.
    GraphB {
        #[serde(default)]
        n: Option<usize>,
    },
}

fn default_kind() -> GraphSpaceKind {
    GraphSpaceKind::UndirectedNoLoops
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingLayout {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default = "default_kind")]
    pub kind: GraphSpaceKind,
}

impl EncodingLayout {
    pub fn graph_a(type_slots: &[(&str, usize)]) -> Self {
        EncodingLayout {
            strategy: Strategy::GraphA {
                type_slots: type_slots.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
            },
            kind: default_kind(),
        }
    }

    pub fn graph_b(n: Option<usize>) -> Self {
        EncodingLayout {
            strategy: Strategy::GraphB { n },
            kind: default_kind(),
        }
    }

    /// Fixes Graph-B's `n` to the largest heavy-atom count in `molecules`.
    pub fn resolve(&self, molecules: &[Molecule]) -> Self {
        match self.strategy {
            Strategy::GraphB { n: None } => {
                let n = molecules.iter().map(Molecule::heavy_atom_count).max().unwrap_or(1).max(1);
                EncodingLayout {
                    strategy: Strategy::GraphB { n: Some(n) },
                    kind: self.kind,
                }
            }
            _ => self.clone(),
        }
    }

    pub fn n(&self) -> Result<usize> {
        match &self.strategy {
            Strategy::GraphA { type_slots } => Ok(type_slots.iter().map(|(_, c)| c).sum()),
            Strategy::GraphB { n: Some(n) } => Ok(*n),
            Strategy::GraphB { n: None } => Err(GraphGpError::invalid(
                "Graph-B layout has no node count; resolve it against a dataset first",
            )),
        }
    }

    pub fn space(&self) -> Result<GraphSpace> {
        GraphSpace::new(self.kind, self.n()?)
    }

    /// First node of every type block.
    fn offsets(&self) -> BTreeMap<&str, (usize, usize)> {
        let mut out = BTreeMap::new();
        if let Strategy::GraphA { type_slots } = &self.strategy {
            let mut at = 0;
            for (t, c) in type_slots {
                out.insert(t.as_str(), (at, *c));
                at += c;
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if let Strategy::GraphA { type_slots } = &self.strategy {
            let mut seen = BTreeSet::new();
            for (t, _) in type_slots {
                if !seen.insert(t) {
                    return Err(GraphGpError::invalid(format!("element '{t}' listed twice in the layout")));
                }
            }
        }
        Ok(())
    }
}

/// Node assigned to every heavy atom of `molecule`.
fn node_assignment(molecule: &Molecule, skeleton: &Skeleton, layout: &EncodingLayout) -> Result<Vec<usize>> {
    match &layout.strategy {
        Strategy::GraphB { .. } => {
            let n = layout.n()?;
            if skeleton.atoms.len() > n {
                return Err(molecule.fail(format!(
                    "{} heavy atoms do not fit on {n} nodes",
                    skeleton.atoms.len()
                )));
            }
            Ok((0..skeleton.atoms.len()).collect())
        }
        Strategy::GraphA { .. } => {
            let offsets = layout.offsets();
            let mut used: BTreeMap<&str, usize> = BTreeMap::new();
            skeleton
                .atoms
                .iter()
                .map(|a| {
                    let &(start, cap) = offsets
                        .get(a.as_str())
                        .ok_or_else(|| molecule.fail(format!("element '{a}' has no slots in the layout")))?;
                    let k = used.entry(a.as_str()).or_default();
                    if *k >= cap {
                        return Err(molecule.fail(format!("more than {cap} atoms of element '{a}'")));
                    }
                    *k += 1;
                    Ok(start + *k - 1)
                })
                .collect()
        }
    }
}

pub fn encode(molecule: &Molecule, layout: &EncodingLayout) -> Result<GraphCode> {
    layout.validate()?;
    let space = layout.space()?;
    encode_in(molecule, layout, &space)
}

fn encode_in(molecule: &Molecule, layout: &EncodingLayout, space: &GraphSpace) -> Result<GraphCode> {
    let skeleton = molecule.skeleton()?;
    let nodes = node_assignment(molecule, &skeleton, layout)?;
    let mut edges = Vec::with_capacity(skeleton.bonds.len() * 2);
    for &(a, b) in &skeleton.bonds {
        let (i, j) = (nodes[a], nodes[b]);
        edges.push((i.min(j), i.max(j)));
        if space.kind().is_directed() {
            edges.push((i.max(j), i.min(j)));
        }
    }
    space.code_from_edges(&edges)
}

/// Edge list of a code; `encode` of these edges gives the code back.
pub fn decode(code: &GraphCode, layout: &EncodingLayout) -> Result<Vec<(usize, usize)>> {
    layout.space()?.edges(code)
}

/// Keeps molecules with at least one heavy atom whose element counts fit `caps`.
pub fn filter_small(molecules: &[Molecule], caps: &[(String, usize)]) -> Vec<Molecule> {
    let caps: BTreeMap<&str, usize> = caps.iter().map(|(t, c)| (t.as_str(), *c)).collect();
    molecules
        .iter()
        .filter(|m| {
            let comp = m.composition();
            !comp.is_empty() && comp.iter().all(|(t, c)| caps.get(t.as_str()).is_some_and(|cap| c <= cap))
        })
        .cloned()
        .collect()
}

/// Node blocks of a Graph-A layout as a permutation group.
pub fn subgroup_from_layout(layout: &EncodingLayout) -> Result<PermSubgroup> {
    match &layout.strategy {
        Strategy::GraphA { type_slots } => {
            let mut blocks = Vec::new();
            let mut at = 0;
            for (_, c) in type_slots {
                blocks.push((at..at + c).collect());
                at += c;
            }
            PermSubgroup::new(at, blocks)
        }
        Strategy::GraphB { .. } => Err(GraphGpError::invalid(
            "Graph-B layouts have no type blocks to permute within",
        )),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub code: GraphCode,
    pub target: f64,
}

/// Encoded molecules in one graph space.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub layout: EncodingLayout,
    pub space: GraphSpace,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Encodes every molecule; Graph-B's `n` is resolved against the input.
    pub fn encode(molecules: &[Molecule], layout: &EncodingLayout) -> Result<Self> {
        let layout = layout.resolve(molecules);
        layout.validate()?;
        let space = layout.space()?;
        let examples = molecules
            .iter()
            .map(|m| {
                Ok(Example {
                    id: m.id.clone(),
                    code: encode_in(m, &layout, &space)?,
                    target: m.target,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            layout,
            space,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn codes(&self, indices: &[usize]) -> Vec<GraphCode> {
        indices.iter().map(|&i| self.examples[i].code.clone()).collect()
    }

    pub fn targets(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.examples[i].target).collect()
    }

    /// Mean and population standard deviation of all targets.
    pub fn normalization(&self) -> Result<gp::TargetTransform> {
        gp::TargetTransform::fit(&self.targets(&(0..self.len()).collect::<Vec<_>>()))
    }
}

/// Disjoint train/test indices covering `0..len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..len` with `seed`; the first `round(ratio · len)` go to training.
pub fn split(len: usize, ratio: f64, seed_value: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GraphGpError::invalid(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if len < 2 {
        return Err(GraphGpError::invalid(format!("cannot split {len} example(s)")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed::rng(seed_value));
    let cut = ((ratio * len as f64).round() as usize).clamp(1, len - 1);
    let mut train = order[..cut].to_vec();
    let mut test = order[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        seed: seed_value,
        train,
        test,
    })
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(GraphGpError::invalid(format!(
            "rmse needs equal nonempty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// `Σ_i log N(y_i | μ_i, v_i)`.
pub fn gaussian_log_likelihood(means: &[f64], variances: &[f64], truth: &[f64]) -> Result<f64> {
    if truth.is_empty() || means.len() != truth.len() || variances.len() != truth.len() {
        return Err(GraphGpError::invalid("log likelihood needs equal nonempty inputs"));
    }
    if let Some(v) = variances.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(GraphGpError::invalid(format!("predictive variance {v} is not positive")));
    }
    Ok(means
        .iter()
        .zip(variances)
        .zip(truth)
        .map(|((m, v), y)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (y - m).powi(2) / v))
        .sum())
}

/// Per-point predictive log density on the model's normalized scale, under
/// `N(m̂, k̂ + σ_ε²)`, averaged over the test set.
pub fn mean_log_lik(model: &GpModel, xs: &[GraphCode], ys: &[f64]) -> Result<f64> {
    let (means, vars) = model.predict_marginals(xs)?;
    let t = model.transform();
    let z_means: Vec<f64> = means.iter().map(|&m| t.forward(m)).collect();
    let z_vars: Vec<f64> = vars.iter().map(|v| v / (t.std * t.std) + model.noise()).collect();
    let z_truth: Vec<f64> = ys.iter().map(|&y| t.forward(y)).collect();
    Ok(gaussian_log_likelihood(&z_means, &z_vars, &z_truth)? / ys.len() as f64)
}

/// Settings for [`synthetic_molecules`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub count: usize,
    pub type_slots: Vec<(String, usize)>,
    /// Probability of each extra bond beyond a spanning tree.
    #[serde(default = "default_extra_bond")]
    pub extra_bond_probability: f64,
    pub kernel: crate::kernels::KernelSpec,
    pub noise: f64,
    pub seed: u64,
}

fn default_extra_bond() -> f64 {
    0.15
}

/// Random small molecules whose targets are one draw from the Graph-A
/// invariant prior plus Gaussian noise.
pub fn synthetic_molecules(config: &SyntheticConfig) -> Result<Vec<Molecule>> {
    let layout = EncodingLayout {
        strategy: Strategy::GraphA {
            type_slots: config.type_slots.clone(),
        },
        kind: default_kind(),
    };
    let mut rng = seed::rng(seed::substream(config.seed, "molecules"));
    let mut molecules = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let mut atoms = Vec::new();
        while atoms.len() < 2 {
            atoms.clear();
            for (t, cap) in &config.type_slots {
                let k = rng.random_range(0..=*cap);
                atoms.extend(std::iter::repeat_n(t.clone(), k));
            }
        }
        atoms.shuffle(&mut rng);
        let mut bonds = Vec::new();
        for b in 1..atoms.len() {
            bonds.push([rng.random_range(0..b), b]);
        }
        for a in 0..atoms.len() {
            for b in a + 1..atoms.len() {
                if rng.random::<f64>() < config.extra_bond_probability {
                    bonds.push([a, b]);
                }
            }
        }
        molecules.push(Molecule {
            id: format!("syn-{i:04}"),
            atoms,
            bonds,
            target: 0.0,
        });
    }
    let dataset = Dataset::encode(&molecules, &layout)?;
    let group = subgroup_from_layout(&layout)?;
    let base = crate::kernels::IsotropicKernel::new(config.kernel.clone(), dataset.space.d())?;
    let kernel = GpKernel::Invariant(crate::invariance::InvariantKernel::exact(base, &dataset.space, &group)?);
    let codes = dataset.codes(&(0..dataset.len()).collect::<Vec<_>>());
    let draw = gp::sample_prior_exact(&kernel, &codes, 1, seed::substream(config.seed, "targets"))?;
    let noise_sd = config.noise.max(0.0).sqrt();
    let mut noise_rng = seed::rng(seed::substream(config.seed, "noise"));
    for (i, m) in molecules.iter_mut().enumerate() {
        let eps: f64 = noise_rng.sample(rand_distr::StandardNormal);
        m.target = draw[(0, i)] + noise_sd * eps;
    }
    Ok(molecules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariance::{same_orbit, DEFAULT_GROUP_CAP};

    fn caps() -> Vec<(String, usize)> {
        ["C", "N", "O", "Cl"].iter().map(|t| (t.to_string(), 3)).collect()
    }

    fn mol(atoms: &[&str], bonds: &[[usize; 2]]) -> Molecule {
        Molecule {
            id: "m".into(),
            atoms: atoms.iter().map(|a| a.to_string()).collect(),
            bonds: bonds.to_vec(),
            target: 1.0,
        }
    }

    fn layout_a() -> EncodingLayout {
        EncodingLayout::graph_a(&[("C", 3), ("N", 3), ("O", 3), ("Cl", 3)])
    }

    #[test]
    fn graph_a_layout_arithmetic() {
        let code = encode(&mol(&["C", "O"], &[[0, 1]]), &layout_a()).unwrap();
        let space = layout_a().space().unwrap();
        assert_eq!(space.edges(&code).unwrap(), vec![(0, 6)]);
        assert_eq!(encode(&mol(&["C", "C"], &[]), &layout_a()).unwrap(), space.empty_code());
    }

    #[test]
    fn hydrogens_and_duplicate_bonds() {
        let m = mol(&["H", "C", "O", "H"], &[[0, 1], [1, 2], [2, 1], [2, 3]]);
        let s = m.skeleton().unwrap();
        assert_eq!(s.atoms, vec!["C", "O"]);
        assert_eq!(s.bonds, vec![(0, 1)]);
        assert!(mol(&["C"], &[[0, 0]]).skeleton().is_err());
        assert!(mol(&["C"], &[[0, 3]]).skeleton().is_err());
    }

    #[test]
    fn capacity_errors_name_the_molecule() {
        let err = encode(&mol(&["C", "C", "C", "C"], &[]), &layout_a()).unwrap_err();
        assert!(err.to_string().contains("'m'") && err.to_string().contains("'C'"));
        assert!(encode(&mol(&["S"], &[]), &layout_a()).is_err());
        assert!(encode(&mol(&["C", "C", "C"], &[]), &EncodingLayout::graph_b(Some(2))).is_err());
    }

    #[test]
    fn graph_b_orders_are_relabelings() {
        let a = mol(&["C", "C", "O", "N"], &[[0, 1], [1, 2], [1, 3]]);
        let b = mol(&["O", "N", "C", "C"], &[[3, 2], [2, 0], [2, 1]]);
        let layout = EncodingLayout::graph_b(Some(5));
        let space = layout.space().unwrap();
        let (ca, cb) = (encode(&a, &layout).unwrap(), encode(&b, &layout).unwrap());
        assert_ne!(ca, cb);
        assert!(same_orbit(&space, &PermSubgroup::symmetric(5), &ca, &cb).unwrap());
    }

    #[test]
    fn graph_b_n_defaults_to_largest() {
        let ms = vec![mol(&["C", "C", "H"], &[[0, 1]]), mol(&["C", "O", "N", "H", "H"], &[])];
        let data = Dataset::encode(&ms, &EncodingLayout::graph_b(None)).unwrap();
        assert_eq!(data.space.n(), 3);
    }

    #[test]
    fn encode_decode_round_trip() {
        let layout = layout_a();
        let space = layout.space().unwrap();
        let m = mol(&["C", "N", "O", "C", "Cl"], &[[0, 1], [1, 2], [2, 3], [3, 4], [0, 3]]);
        let code = encode(&m, &layout).unwrap();
        let edges = decode(&code, &layout).unwrap();
        assert_eq!(space.code_from_edges(&edges).unwrap(), code);
    }

    #[test]
    fn graph_a_ignores_bond_order() {
        let a = mol(&["C", "N", "O"], &[[0, 1], [1, 2]]);
        let b = mol(&["C", "N", "O"], &[[2, 1], [1, 0], [0, 1]]);
        assert_eq!(encode(&a, &layout_a()).unwrap(), encode(&b, &layout_a()).unwrap());
    }

    #[test]
    fn filter_examples() {
        let ethanol = mol(&["C", "C", "O", "H", "H", "H", "H", "H", "H"], &[[0, 1], [1, 2]]);
        let benzene = mol(&["C"; 6], &[[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 0]]);
        let kept = filter_small(&[ethanol.clone(), benzene], &caps());
        assert_eq!(kept, vec![ethanol.clone()]);
        assert!(filter_small(&[ethanol], &[]).is_empty());
    }

    #[test]
    fn subgroup_examples() {
        let g = subgroup_from_layout(&layout_a()).unwrap();
        assert_eq!(g.blocks(), &[vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![9, 10, 11]]);
        assert_eq!(g.order(), 1296.0);
        let single = subgroup_from_layout(&EncodingLayout::graph_a(&[("C", 4)])).unwrap();
        assert_eq!(single, PermSubgroup::symmetric(4));
        let singles = subgroup_from_layout(&EncodingLayout::graph_a(&[("C", 1), ("O", 1)])).unwrap();
        assert!(singles.is_trivial());
        assert!(subgroup_from_layout(&EncodingLayout::graph_b(Some(3))).is_err());
        assert!(g.checked_order(DEFAULT_GROUP_CAP).is_ok());
    }

    #[test]
    fn split_properties() {
        let s = split(10, 0.8, 4).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, split(10, 0.8, 4).unwrap());
        assert!(split(10, 1.0, 4).is_err());
        assert!(split(1, 0.5, 4).is_err());
    }

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), (12.5f64).sqrt());
        assert!(rmse(&[], &[]).is_err());
        // zero prediction on standardized targets has RMSE equal to their std (one)
        let ys = [1.0, 4.0, -2.0, 7.0];
        let t = gp::TargetTransform::fit(&ys).unwrap();
        let z: Vec<f64> = ys.iter().map(|&y| t.forward(y)).collect();
        assert!((rmse(&[0.0; 4], &z).unwrap() - 1.0).abs() < 1e-12);
        let ll = gaussian_log_likelihood(&[0.0], &[1.0], &[0.0]).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn jsonl_round_trip() {
        let ms = vec![mol(&["C", "O"], &[[0, 1]]), mol(&["N"], &[])];
        let text = molecules_to_jsonl(&ms);
        assert_eq!(parse_molecules(&text, "test").unwrap(), ms);
        assert!(parse_molecules("{\"atoms\":", "bad").is_err());
    }

    #[test]
    fn synthetic_generation_is_seeded() {
        let config = SyntheticConfig {
            count: 12,
            type_slots: vec![("C".into(), 3), ("O".into(), 2)],
            extra_bond_probability: 0.2,
            kernel: crate::kernels::KernelSpec::heat(1.0),
            noise: 0.01,
            seed: 5,
        };
        let a = synthetic_molecules(&config).unwrap();
        assert_eq!(a, synthetic_molecules(&config).unwrap());
        assert_eq!(a.len(), 12);
        let layout = EncodingLayout::graph_a(&[("C", 3), ("O", 2)]);
        assert!(a.iter().all(|m| encode(m, &layout).is_ok()));
    }
}
