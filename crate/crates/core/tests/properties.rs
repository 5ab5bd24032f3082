use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use graphgp::datasets::{self, EncodingLayout, Molecule};
use graphgp::gp::{GpKernel, GpModel};
use graphgp::invariance::{InvariantKernel, PermSubgroup, QuotientGraph};
use graphgp::kernels::{self, spectral_coefficients, IsotropicKernel, KernelSpec, LaplacianVariant};
use graphgp::kravchuk::kravchuk_closed_form;
use graphgp::seed;
use graphgp::{GraphCode, GraphSpace, GraphSpaceKind, KravchukTable, NodePermutation, SlotPermutation};

fn kind_strategy() -> impl Strategy<Value = GraphSpaceKind> {
    prop::sample::select(GraphSpaceKind::ALL.to_vec())
}

fn space_strategy(max_n: usize) -> impl Strategy<Value = GraphSpace> {
    (kind_strategy(), 2..=max_n).prop_map(|(k, n)| GraphSpace::new(k, n).unwrap())
}

fn spec_strategy() -> impl Strategy<Value = KernelSpec> {
    let laplacian = prop::sample::select(vec![
        LaplacianVariant::Plain,
        LaplacianVariant::RandomWalk,
        LaplacianVariant::SymmetricNormalized,
    ]);
    (0..3u8, 0.2f64..3.0, 0.5f64..8.0, 0.2f64..4.0, laplacian).prop_map(|(family, kappa, nu, var, lap)| {
        let spec = match family {
            0 => KernelSpec::heat(kappa),
            1 => KernelSpec::matern(nu, kappa),
            _ => KernelSpec::matern_offset(nu / 2.0, kappa),
        };
        spec.with_variance(var).with_laplacian(lap)
    })
}

fn codes(space: &GraphSpace, count: usize, seed_value: u64) -> Vec<GraphCode> {
    let mut rng = seed::rng(seed_value);
    (0..count).map(|_| space.random_code(&mut rng)).collect()
}

fn random_node_perm(n: usize, seed_value: u64) -> NodePermutation {
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(&mut seed::rng(seed_value));
    NodePermutation::new(map).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn node_permutations_preserve_hamming(space in space_strategy(7), s in any::<u64>()) {
        let xs = codes(&space, 2, s);
        let sigma = random_node_perm(space.n(), s ^ 1);
        let (a, b) = (space.apply(&sigma, &xs[0]).unwrap(), space.apply(&sigma, &xs[1]).unwrap());
        prop_assert_eq!(a.hamming(&b).unwrap(), xs[0].hamming(&xs[1]).unwrap());
        prop_assert_eq!(a.weight(), xs[0].weight());
    }

    #[test]
    fn xor_translations_preserve_hamming(space in space_strategy(8), s in any::<u64>()) {
        let xs = codes(&space, 3, s);
        let (x, y, z) = (&xs[0], &xs[1], &xs[2]);
        prop_assert_eq!(x.xor(z).unwrap().hamming(&y.xor(z).unwrap()).unwrap(), x.hamming(y).unwrap());
    }

    #[test]
    fn code_edge_round_trip(space in space_strategy(8), s in any::<u64>()) {
        let x = &codes(&space, 1, s)[0];
        let edges = space.edges(x).unwrap();
        prop_assert_eq!(&space.code_from_edges(&edges).unwrap(), x);
        prop_assert_eq!(&space.code_from_str(&x.to_string()).unwrap(), x);
    }

    #[test]
    fn kernel_profile_is_bounded(spec in spec_strategy(), d in 1usize..40) {
        let k = IsotropicKernel::new(spec.clone(), d).unwrap();
        prop_assert!((k.profile()[0] - spec.variance).abs() <= 1e-12 * spec.variance);
        for &v in k.profile() {
            prop_assert!(v.abs() <= spec.variance * (1.0 + 1e-12));
        }
    }

    #[test]
    fn kernel_is_isotropic(spec in spec_strategy(), space in space_strategy(6), s in any::<u64>()) {
        let kernel = IsotropicKernel::new(spec, space.d()).unwrap();
        let xs = codes(&space, 3, s);
        let k = |a: &GraphCode, b: &GraphCode| kernels::gram(&kernel, &[a.clone()], &[b.clone()]).unwrap()[(0, 0)];
        let mut map: Vec<usize> = (0..space.d()).collect();
        map.shuffle(&mut seed::rng(s ^ 7));
        let pi = SlotPermutation::new(map).unwrap();
        let base = k(&xs[0], &xs[1]);
        prop_assert_eq!(base, k(&xs[0].xor(&xs[2]).unwrap(), &xs[1].xor(&xs[2]).unwrap()));
        prop_assert_eq!(base, k(&pi.apply(&xs[0]), &pi.apply(&xs[1])));
    }

    #[test]
    fn truncation_renormalizes_the_kept_levels(spec in spec_strategy(), d in 1usize..20, cut in 0usize..20) {
        let j_max = cut.min(d);
        let full = spectral_coefficients(&spec, d).unwrap().weights();
        let trunc = spectral_coefficients(&spec.clone().with_truncation(Some(j_max)), d).unwrap().weights();
        let mass: f64 = full[..=j_max].iter().sum();
        for j in 0..=d {
            let expected = if j <= j_max { full[j] / mass } else { 0.0 };
            prop_assert!((trunc[j] - expected).abs() <= 1e-12);
        }
        let exact = IsotropicKernel::new(spec.clone().with_truncation(Some(d)), d).unwrap();
        let untouched = IsotropicKernel::new(spec, d).unwrap();
        prop_assert_eq!(exact.profile(), untouched.profile());
    }

    #[test]
    fn gram_is_psd(spec in spec_strategy(), s in any::<u64>()) {
        let space = GraphSpace::new(GraphSpaceKind::DirectedNoLoops, 3).unwrap();
        let kernel = IsotropicKernel::new(spec, space.d()).unwrap();
        let xs = codes(&space, 30, s);
        let g = kernels::gram_symmetric(&kernel, &xs).unwrap();
        let min = nalgebra::SymmetricEigen::new(g.clone()).eigenvalues.min();
        prop_assert!(min >= -1e-8 * g.trace());
    }

    #[test]
    fn invariant_kernel_is_group_invariant(spec in spec_strategy(), s in any::<u64>()) {
        let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 5).unwrap();
        let group = PermSubgroup::parse("0,1,2|3,4", 5).unwrap();
        let kernel = InvariantKernel::exact(IsotropicKernel::new(spec, space.d()).unwrap(), &space, &group).unwrap();
        let xs = codes(&space, 2, s);
        let mut rng = seed::rng(s ^ 3);
        let (s1, s2) = (group.sample(&mut rng), group.sample(&mut rng));
        let base = kernel.evaluate(&xs[0], &xs[1]).unwrap();
        let moved = kernel
            .evaluate(&space.apply(&s1, &xs[0]).unwrap(), &space.apply(&s2, &xs[1]).unwrap())
            .unwrap();
        prop_assert!((base - moved).abs() <= 1e-12 * kernel.base().variance());
        prop_assert!((base - kernel.evaluate(&xs[1], &xs[0]).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn monte_carlo_grams_are_psd(size in 1usize..12, s in any::<u64>()) {
        let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 4).unwrap();
        let base = IsotropicKernel::new(KernelSpec::matern(1.5, 1.0), space.d()).unwrap();
        let kernel = InvariantKernel::monte_carlo(base, &space, &PermSubgroup::symmetric(4), size, s).unwrap();
        let g = kernel.gram_symmetric(&space.all_codes(12).unwrap()).unwrap();
        let min = nalgebra::SymmetricEigen::new(g.clone()).eigenvalues.min();
        prop_assert!(min >= -1e-8 * g.trace());
    }

    #[test]
    fn posterior_variance_is_dominated(spec in spec_strategy(), s in any::<u64>(), noise in 1e-4f64..1.0) {
        let space = GraphSpace::new(GraphSpaceKind::UndirectedLoops, 3).unwrap();
        let kernel = GpKernel::Isotropic(IsotropicKernel::new(spec.clone(), space.d()).unwrap());
        let xs = codes(&space, 8, s);
        let mut rng = seed::rng(s);
        let ys: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let model = GpModel::fit(kernel, &xs, &ys, noise).unwrap();
        let (_, vars) = model.predict_marginals(&codes(&space, 10, s ^ 9)).unwrap();
        for v in vars {
            prop_assert!((0.0..=spec.variance * (1.0 + 1e-10)).contains(&v));
        }
    }

    #[test]
    fn predictions_are_equivariant(spec in spec_strategy(), s in any::<u64>()) {
        let space = GraphSpace::new(GraphSpaceKind::DirectedNoLoops, 3).unwrap();
        let kernel = GpKernel::Isotropic(IsotropicKernel::new(spec, space.d()).unwrap());
        let xs = codes(&space, 6, s);
        let test = codes(&space, 4, s ^ 5);
        let mut rng = seed::rng(s);
        let ys: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = space.random_code(&mut rng);
        let mut map: Vec<usize> = (0..space.d()).collect();
        map.shuffle(&mut rng);
        let pi = SlotPermutation::new(map).unwrap();
        let moved = |v: &[GraphCode]| -> Vec<GraphCode> { v.iter().map(|c| pi.apply(&c.xor(&z).unwrap())).collect() };
        let a = GpModel::fit(kernel.clone(), &xs, &ys, 0.1).unwrap().predict(&test).unwrap();
        let b = GpModel::fit(kernel, &moved(&xs), &ys, 0.1).unwrap().predict(&moved(&test)).unwrap();
        prop_assert!((a.mean - b.mean).amax() <= 1e-12);
        prop_assert!((a.covariance - b.covariance).amax() <= 1e-12);
    }

    #[test]
    fn split_is_disjoint_and_covering(len in 2usize..200, ratio in 0.05f64..0.95, s in any::<u64>()) {
        let split = datasets::split(len, ratio, s).unwrap();
        let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
        prop_assert!(!split.train.is_empty() && !split.test.is_empty());
    }

    #[test]
    fn graph_a_codes_of_relabelled_molecules_share_kernel_values(s in any::<u64>()) {
        let layout = EncodingLayout::graph_a(&[("C", 3), ("N", 2), ("O", 2)]);
        let mut rng = seed::rng(s);
        let atoms = ["C", "C", "C", "N", "N", "O", "O"];
        let bonds: Vec<[usize; 2]> = (1..atoms.len()).map(|b| [rng.random_range(0..b), b]).collect();
        let mol = Molecule {
            id: "m".into(),
            atoms: atoms.iter().map(|a| a.to_string()).collect(),
            bonds: bonds.clone(),
            target: 0.0,
        };
        // same molecule with atoms listed in another order
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.shuffle(&mut rng);
        let mut position = vec![0; atoms.len()];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let shuffled = Molecule {
            id: "m'".into(),
            atoms: order.iter().map(|&i| atoms[i].to_string()).collect(),
            bonds: bonds.iter().map(|[a, b]| [position[*a], position[*b]]).collect(),
            target: 0.0,
        };
        let space = layout.space().unwrap();
        let (x, x2) = (datasets::encode(&mol, &layout).unwrap(), datasets::encode(&shuffled, &layout).unwrap());
        let group = datasets::subgroup_from_layout(&layout).unwrap();
        let kernel = InvariantKernel::exact(IsotropicKernel::new(KernelSpec::heat(1.0), space.d()).unwrap(), &space, &group).unwrap();
        let third = space.random_code(&mut rng);
        prop_assert_eq!(kernel.evaluate(&x, &third).unwrap(), kernel.evaluate(&x2, &third).unwrap());
        prop_assert_eq!(datasets::decode(&x, &layout).unwrap().len(), atoms.len() - 1);
    }

    #[test]
    fn graph_a_ignores_bond_listing_order(s in any::<u64>()) {
        let layout = EncodingLayout::graph_a(&[("C", 3), ("O", 3)]);
        let mut rng = seed::rng(s);
        let atoms: Vec<String> = ["C", "O", "C", "O", "C"].iter().map(|a| a.to_string()).collect();
        let mut bonds: Vec<[usize; 2]> = (1..5).map(|b| [rng.random_range(0..b), b]).collect();
        let a = Molecule { id: "a".into(), atoms: atoms.clone(), bonds: bonds.clone(), target: 0.0 };
        bonds.shuffle(&mut rng);
        for b in bonds.iter_mut() {
            if rng.random_bool(0.5) {
                b.swap(0, 1);
            }
        }
        let b = Molecule { id: "b".into(), atoms, bonds, target: 0.0 };
        prop_assert_eq!(datasets::encode(&a, &layout).unwrap(), datasets::encode(&b, &layout).unwrap());
    }
}

#[test]
fn slot_round_trip_for_all_kinds() {
    for kind in GraphSpaceKind::ALL {
        for n in 1..=8 {
            let Ok(space) = GraphSpace::new(kind, n) else { continue };
            for s in 0..space.d() {
                let (i, j) = space.slot_pair(s).unwrap();
                assert_eq!(space.slot_of(i, j).unwrap(), Some(s), "{kind} n={n} slot {s}");
            }
        }
    }
}

#[test]
fn kravchuk_boundedness_and_orthogonality() {
    for d in 1..=12usize {
        let table = KravchukTable::build(d).unwrap();
        for j in 0..=d {
            assert_eq!(table.normalized(j, 0).unwrap(), 1.0);
            for m in 0..=d {
                assert!(table.normalized(j, m).unwrap().abs() <= 1.0 + 1e-12);
            }
            for jp in 0..=d {
                let sum: i128 = (0..=d)
                    .map(|m| {
                        num_binom(d, m)
                            * kravchuk_closed_form(d, j, m).unwrap()
                            * kravchuk_closed_form(d, jp, m).unwrap()
                    })
                    .sum();
                let expected = if j == jp { (1i128 << d) * num_binom(d, j) } else { 0 };
                assert_eq!(sum, expected, "d={d} j={j} j'={jp}");
            }
        }
    }
}

fn num_binom(n: usize, k: usize) -> i128 {
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}

#[test]
fn quotients_are_equitable() {
    let cases = [(3, "0,1,2"), (3, "0,1|2"), (4, "0,1,2|3"), (4, "0,1,2,3"), (4, "0,1|2,3"), (4, "")];
    for (n, blocks) in cases {
        let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, n).unwrap();
        let group = PermSubgroup::parse(blocks, n).unwrap();
        let q = QuotientGraph::build(&space, &group).unwrap();
        assert!(q.is_equitable(), "U_{n} under {blocks:?}");
        for (a, class) in q.classes().iter().enumerate() {
            let degree: f64 = (0..q.len()).map(|b| q.weights()[(a, b)]).sum();
            assert_eq!(degree, (space.d() * class.size as usize) as f64);
        }
    }
}
