//! Deciding graph isomorphism through the invariant kernel: x and y are
//! isomorphic exactly when k(x,y) equals the mean of k(x,x) and k(y,y).
use graphgp::invariance::{orbit_equivalence_test, PermSubgroup};
use graphgp::{GraphSpace, GraphSpaceKind, IsotropicKernel, KernelSpec};

fn main() -> graphgp::Result<()> {
    let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 5)?;
    let group = PermSubgroup::symmetric(5);
    let base = IsotropicKernel::new(KernelSpec::matern(2.5, 1.0), space.d())?;

    let path = space.code_from_edges(&[(0, 1), (1, 2), (2, 3)])?;
    let relabelled = space.code_from_edges(&[(4, 2), (2, 0), (0, 1)])?;
    let star = space.code_from_edges(&[(0, 1), (0, 2), (0, 3)])?;
    for (name, other) in [("relabelled path", &relabelled), ("star", &star)] {
        let same = orbit_equivalence_test(&base, &space, &group, &path, other)?;
        println!("path vs {name}: identical codes {} isomorphic {same}", &path == other);
    }
    Ok(())
}
