//! Graph sets as bit-vector spaces.
//!
//! A graph on `n` nodes is identified with an element of `{0,1}^d`, one bit per
//! edge slot. Slots are node pairs in lexicographic order; this layout is the
//! bit order of every file format and table in the crate.
//!
//! The metagraph on these codes joins two graphs when they differ in exactly
//! one edge, so its path metric is the Hamming distance. XOR translations and
//! node permutations both act by metagraph automorphisms.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GraphGpError, Result};

/// Default upper bound on the node count of a [`GraphSpace`].
pub const DEFAULT_MAX_NODES: usize = 16;

/// The four families of unweighted graphs on `n` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GraphSpaceKind {
    #[serde(rename = "U")]
    UndirectedNoLoops,
    #[serde(rename = "UL")]
    UndirectedLoops,
    #[serde(rename = "D")]
    DirectedNoLoops,
    #[serde(rename = "DL")]
    DirectedLoops,
}

impl GraphSpaceKind {
    pub const ALL: [GraphSpaceKind; 4] = [
        GraphSpaceKind::UndirectedNoLoops,
        GraphSpaceKind::UndirectedLoops,
        GraphSpaceKind::DirectedNoLoops,
        GraphSpaceKind::DirectedLoops,
    ];

    pub fn is_directed(self) -> bool {
        matches!(
            self,
            GraphSpaceKind::DirectedNoLoops | GraphSpaceKind::DirectedLoops
        )
    }

    pub fn allows_loops(self) -> bool {
        matches!(
            self,
            GraphSpaceKind::UndirectedLoops | GraphSpaceKind::DirectedLoops
        )
    }

    /// Short tag used in files: `U`, `UL`, `D` or `DL`.
    pub fn tag(self) -> &'static str {
        match self {
            GraphSpaceKind::UndirectedNoLoops => "U",
            GraphSpaceKind::UndirectedLoops => "UL",
            GraphSpaceKind::DirectedNoLoops => "D",
            GraphSpaceKind::DirectedLoops => "DL",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "U" => Ok(GraphSpaceKind::UndirectedNoLoops),
            "UL" => Ok(GraphSpaceKind::UndirectedLoops),
            "D" => Ok(GraphSpaceKind::DirectedNoLoops),
            "DL" => Ok(GraphSpaceKind::DirectedLoops),
            other => Err(GraphGpError::invalid(format!(
                "unknown graph space kind '{other}' (expected U, UL, D or DL)"
            ))),
        }
    }

    /// Number of edge slots for graphs on `n` nodes.
    pub fn dimension(self, n: usize) -> Result<usize> {
        dimension(self, n)
    }
}

impl fmt::Display for GraphSpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Number of edge slots `d` for graphs of the given kind on `n` nodes.
pub fn dimension(kind: GraphSpaceKind, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(GraphGpError::invalid("graph spaces need at least one node"));
    }
    Ok(match kind {
        GraphSpaceKind::UndirectedNoLoops => n * (n - 1) / 2,
        GraphSpaceKind::UndirectedLoops => n * (n + 1) / 2,
        GraphSpaceKind::DirectedNoLoops => n * (n - 1),
        GraphSpaceKind::DirectedLoops => n * n,
    })
}

/// Identity of a space, carried by every code so that codes from different
/// spaces with equal `d` are still told apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceKey {
    pub kind: GraphSpaceKind,
    pub n: usize,
}

impl fmt::Display for SpaceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind, self.n)
    }
}

/// One of `U_n`, `UL_n`, `D_n`, `DL_n` with its edge-slot table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSpace {
    kind: GraphSpaceKind,
    n: usize,
    slots: Vec<(usize, usize)>,
    // n*n table of slot indices, NO_SLOT where the pair has no slot
    lookup: Vec<usize>,
}

const NO_SLOT: usize = usize::MAX;

impl GraphSpace {
    pub fn new(kind: GraphSpaceKind, n: usize) -> Result<Self> {
        Self::with_max_nodes(kind, n, DEFAULT_MAX_NODES)
    }

    pub fn with_max_nodes(kind: GraphSpaceKind, n: usize, max_nodes: usize) -> Result<Self> {
        let d = dimension(kind, n)?;
        if n > max_nodes {
            return Err(GraphGpError::invalid(format!(
                "n = {n} exceeds the configured maximum of {max_nodes} nodes"
            )));
        }
        let mut slots = Vec::with_capacity(d);
        for i in 0..n {
            for j in 0..n {
                let keep = match kind {
                    GraphSpaceKind::UndirectedNoLoops => i < j,
                    GraphSpaceKind::UndirectedLoops => i <= j,
                    GraphSpaceKind::DirectedNoLoops => i != j,
                    GraphSpaceKind::DirectedLoops => true,
                };
                if keep {
                    slots.push((i, j));
                }
            }
        }
        debug_assert_eq!(slots.len(), d);
        let mut lookup = vec![NO_SLOT; n * n];
        for (s, &(i, j)) in slots.iter().enumerate() {
            lookup[i * n + j] = s;
            if !kind.is_directed() {
                lookup[j * n + i] = s;
            }
        }
        Ok(GraphSpace {
            kind,
            n,
            slots,
            lookup,
        })
    }

    pub fn kind(&self) -> GraphSpaceKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.slots.len()
    }

    pub fn key(&self) -> SpaceKey {
        SpaceKey {
            kind: self.kind,
            n: self.n,
        }
    }

    /// Node pair stored in slot `s`.
    pub fn slot_pair(&self, s: usize) -> Result<(usize, usize)> {
        self.slots.get(s).copied().ok_or(GraphGpError::OutOfRange {
            what: "edge slot",
            index: s,
            bound: self.d(),
        })
    }

    pub fn slots(&self) -> &[(usize, usize)] {
        &self.slots
    }

    /// Slot of the pair `(i, j)`; unordered for undirected kinds. `None` for
    /// self-loops in loop-free kinds.
    pub fn slot_of(&self, i: usize, j: usize) -> Result<Option<usize>> {
        for v in [i, j] {
            if v >= self.n {
                return Err(GraphGpError::OutOfRange {
                    what: "node",
                    index: v,
                    bound: self.n,
                });
            }
        }
        let s = self.lookup[i * self.n + j];
        Ok((s != NO_SLOT).then_some(s))
    }

    pub fn empty_code(&self) -> GraphCode {
        GraphCode::zeros(self.key(), self.d())
    }

    /// Encode an edge list. Undirected pairs may be given in either order;
    /// duplicates and forbidden self-loops are rejected.
    pub fn code_from_edges(&self, edges: &[(usize, usize)]) -> Result<GraphCode> {
        let mut code = self.empty_code();
        for &(i, j) in edges {
            let s = self.slot_of(i, j)?.ok_or_else(|| {
                GraphGpError::InvalidGraph(format!(
                    "self-loop ({i}, {j}) not allowed in {}",
                    self.key()
                ))
            })?;
            if code.bit(s) {
                return Err(GraphGpError::InvalidGraph(format!(
                    "duplicate edge ({i}, {j})"
                )));
            }
            code.set(s, true);
        }
        Ok(code)
    }

    /// Edge list of a code in slot order.
    pub fn edges(&self, code: &GraphCode) -> Result<Vec<(usize, usize)>> {
        self.check(code)?;
        Ok(code.ones().map(|s| self.slots[s]).collect())
    }

    pub fn code_from_bits(&self, bits: &[bool]) -> Result<GraphCode> {
        if bits.len() != self.d() {
            return Err(GraphGpError::invalid(format!(
                "expected {} bits for {}, got {}",
                self.d(),
                self.key(),
                bits.len()
            )));
        }
        let mut code = self.empty_code();
        for (s, &b) in bits.iter().enumerate() {
            code.set(s, b);
        }
        Ok(code)
    }

    /// Parse a `0`/`1` string with slot 0 first.
    pub fn code_from_str(&self, s: &str) -> Result<GraphCode> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(GraphGpError::invalid(format!(
                    "invalid bit character '{other}'"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        self.code_from_bits(&bits)
    }

    /// The code whose slot `s` equals bit `s` of `index`; requires `d <= 64`.
    pub fn code_from_index(&self, index: u64) -> Result<GraphCode> {
        let d = self.d();
        if d > 64 || (d < 64 && index >> d != 0) {
            return Err(GraphGpError::invalid(format!(
                "index {index} does not name a code of {}",
                self.key()
            )));
        }
        let mut code = self.empty_code();
        if d > 0 {
            code.words[0] = index;
        }
        Ok(code)
    }

    /// All `2^d` codes in index order; refuses `d > max_dim`.
    pub fn all_codes(&self, max_dim: usize) -> Result<Vec<GraphCode>> {
        let d = self.d();
        if d > max_dim || d > 63 {
            return Err(GraphGpError::EnumerationCap {
                what: format!("the code set of {}", self.key()),
                size: 2f64.powi(d as i32),
                cap: 2f64.powi(max_dim.min(63) as i32),
            });
        }
        (0..(1u64 << d)).map(|i| self.code_from_index(i)).collect()
    }

    pub fn random_code<R: Rng + ?Sized>(&self, rng: &mut R) -> GraphCode {
        let mut code = self.empty_code();
        for s in 0..self.d() {
            code.set(s, rng.random::<bool>());
        }
        code
    }

    pub fn check(&self, code: &GraphCode) -> Result<()> {
        if code.space_key() != self.key() {
            return Err(GraphGpError::SpaceMismatch {
                left: self.key(),
                right: code.space_key(),
            });
        }
        Ok(())
    }

    /// Image of `x` under a node permutation.
    pub fn apply(&self, sigma: &NodePermutation, x: &GraphCode) -> Result<GraphCode> {
        self.check(x)?;
        Ok(self.edge_permutation(sigma)?.apply(x))
    }

    /// Slot permutation induced by a node permutation.
    pub fn edge_permutation(&self, sigma: &NodePermutation) -> Result<SlotPermutation> {
        if sigma.len() != self.n {
            return Err(GraphGpError::invalid(format!(
                "permutation of {} nodes applied to a space with {} nodes",
                sigma.len(),
                self.n
            )));
        }
        let map = self
            .slots
            .iter()
            .map(|&(i, j)| self.lookup[sigma.image(i) * self.n + sigma.image(j)])
            .collect();
        Ok(SlotPermutation { map })
    }
}

/// Free-function form of [`GraphSpace::apply`].
pub fn apply_permutation(
    space: &GraphSpace,
    sigma: &NodePermutation,
    x: &GraphCode,
) -> Result<GraphCode> {
    space.apply(sigma, x)
}

/// Free-function form of [`GraphSpace::edge_permutation`].
pub fn edge_permutation(sigma: &NodePermutation, space: &GraphSpace) -> Result<SlotPermutation> {
    space.edge_permutation(sigma)
}

/// A graph as a packed bit vector, also an element of `Z_2^d` under XOR.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GraphCode {
    key: SpaceKey,
    d: usize,
    words: Vec<u64>,
}

impl GraphCode {
    fn zeros(key: SpaceKey, d: usize) -> Self {
        GraphCode {
            key,
            d,
            words: vec![0; d.div_ceil(64).max(1)],
        }
    }

    pub fn space_key(&self) -> SpaceKey {
        self.key
    }

    /// Number of edge slots.
    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.d == 0
    }

    pub fn bit(&self, s: usize) -> bool {
        assert!(s < self.d, "slot {s} out of range for d = {}", self.d);
        self.words[s / 64] >> (s % 64) & 1 == 1
    }

    pub fn set(&mut self, s: usize, value: bool) {
        assert!(s < self.d, "slot {s} out of range for d = {}", self.d);
        let mask = 1u64 << (s % 64);
        if value {
            self.words[s / 64] |= mask;
        } else {
            self.words[s / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, s: usize) {
        assert!(s < self.d, "slot {s} out of range for d = {}", self.d);
        self.words[s / 64] ^= 1u64 << (s % 64);
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    /// Number of edges `|x|`.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set slots, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.d).filter(move |&s| self.bit(s))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.d).map(|s| self.bit(s)).collect()
    }

    /// Packed value with slot `s` at bit `s`, when `d <= 64`.
    pub fn as_index(&self) -> Option<u64> {
        (self.d <= 64).then(|| self.words[0])
    }

    fn same_space(&self, other: &GraphCode) -> Result<()> {
        if self.key != other.key || self.d != other.d {
            return Err(GraphGpError::SpaceMismatch {
                left: self.key,
                right: other.key,
            });
        }
        Ok(())
    }

    pub fn xor(&self, other: &GraphCode) -> Result<GraphCode> {
        self.same_space(other)?;
        Ok(GraphCode {
            key: self.key,
            d: self.d,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }

    pub fn hamming(&self, other: &GraphCode) -> Result<usize> {
        self.same_space(other)?;
        Ok(self.hamming_unchecked(other))
    }

    #[inline]
    pub(crate) fn hamming_unchecked(&self, other: &GraphCode) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

/// Hamming distance `|x ∔ y|`.
pub fn hamming(x: &GraphCode, y: &GraphCode) -> Result<usize> {
    x.hamming(y)
}

impl Ord for GraphCode {
    /// Lexicographic over the slot sequence, slot 0 first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then(self.d.cmp(&other.d))
            .then_with(|| {
                for (a, b) in self.words.iter().zip(&other.words) {
                    let diff = a ^ b;
                    if diff != 0 {
                        let first = diff.trailing_zeros();
                        return if a >> first & 1 == 0 {
                            Ordering::Less
                        } else {
                            Ordering::Greater
                        };
                    }
                }
                Ordering::Equal
            })
    }
}

impl PartialOrd for GraphCode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GraphCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in 0..self.d {
            f.write_str(if self.bit(s) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A permutation of the nodes `0..n`, stored as its image vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodePermutation {
    mapping: Vec<usize>,
}

impl NodePermutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &v in &mapping {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(GraphGpError::invalid(format!(
                    "{mapping:?} is not a permutation of 0..{n}"
                )));
            }
        }
        Ok(NodePermutation { mapping })
    }

    pub fn identity(n: usize) -> Self {
        NodePermutation {
            mapping: (0..n).collect(),
        }
    }

    /// Transposition of nodes `a` and `b`.
    pub fn swap(n: usize, a: usize, b: usize) -> Result<Self> {
        let mut mapping: Vec<usize> = (0..n).collect();
        if a >= n || b >= n {
            return Err(GraphGpError::invalid(format!(
                "swap ({a} {b}) out of range for {n} nodes"
            )));
        }
        mapping.swap(a, b);
        Ok(NodePermutation { mapping })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn image(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &NodePermutation) -> Result<NodePermutation> {
        if self.len() != other.len() {
            return Err(GraphGpError::invalid("composing permutations of different sizes"));
        }
        Ok(NodePermutation {
            mapping: other.mapping.iter().map(|&i| self.mapping[i]).collect(),
        })
    }

    pub fn inverse(&self) -> NodePermutation {
        let mut mapping = vec![0; self.len()];
        for (i, &v) in self.mapping.iter().enumerate() {
            mapping[v] = i;
        }
        NodePermutation { mapping }
    }
}

/// A permutation of edge slots. Slot `s` of the input moves to slot `map[s]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SlotPermutation {
    map: Vec<usize>,
}

impl SlotPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        NodePermutation::new(map).map(|p| SlotPermutation { map: p.mapping })
    }

    pub fn identity(d: usize) -> Self {
        SlotPermutation {
            map: (0..d).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn image(&self, s: usize) -> usize {
        self.map[s]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SlotPermutation) -> SlotPermutation {
        SlotPermutation {
            map: other.map.iter().map(|&s| self.map[s]).collect(),
        }
    }

    /// Permute the bits of `x`. The caller guarantees `x.len() == self.len()`.
    pub fn apply(&self, x: &GraphCode) -> GraphCode {
        assert_eq!(x.len(), self.len(), "slot permutation length mismatch");
        let mut out = GraphCode::zeros(x.key, x.d);
        for (w, &word) in x.words.iter().enumerate() {
            let mut rest = word;
            while rest != 0 {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let t = self.map[w * 64 + b];
                out.words[t / 64] |= 1u64 << (t % 64);
            }
        }
        out
    }
}

/// On-disk graph: `{"kind":"U","n":3,"edges":[[0,1]]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub kind: GraphSpaceKind,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl GraphFile {
    pub fn from_code(space: &GraphSpace, code: &GraphCode) -> Result<Self> {
        Ok(GraphFile {
            kind: space.kind(),
            n: space.n(),
            edges: space.edges(code)?.into_iter().map(|(i, j)| [i, j]).collect(),
        })
    }

    pub fn space(&self) -> Result<GraphSpace> {
        GraphSpace::new(self.kind, self.n)
    }

    pub fn to_code(&self, space: &GraphSpace) -> Result<GraphCode> {
        if space.kind() != self.kind || space.n() != self.n {
            return Err(GraphGpError::SpaceMismatch {
                left: space.key(),
                right: SpaceKey {
                    kind: self.kind,
                    n: self.n,
                },
            });
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        space.code_from_edges(&edges)
    }

    pub fn decode(&self) -> Result<(GraphSpace, GraphCode)> {
        let space = self.space()?;
        let code = self.to_code(&space)?;
        Ok((space, code))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GraphGpError::json("graph", e))
    }
}
