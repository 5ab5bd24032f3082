//! The quotient graph of U on four nodes under all node relabellings, and
//! the invariant kernel read off its spectrum.
use graphgp::invariance::{InvariantKernel, PermSubgroup, QuotientGraph};
use graphgp::{GraphSpace, GraphSpaceKind, IsotropicKernel, KernelSpec};

fn main() -> graphgp::Result<()> {
    let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 4)?;
    let group = PermSubgroup::symmetric(4);
    let quotient = QuotientGraph::build(&space, &group)?;
    println!("{} isomorphism classes, equitable: {}", quotient.len(), quotient.is_equitable());

    let base = IsotropicKernel::new(KernelSpec::heat(2.0), space.d())?;
    let invariant = InvariantKernel::exact(base.clone(), &space, &group)?;
    let classes = quotient.classes();
    for (i, class) in classes.iter().enumerate().take(6) {
        let rep = &class.canonical;
        let spectral = quotient.quotient_kernel(&base, i, 0)?;
        let averaged = invariant.evaluate(rep, &classes[0].canonical)?;
        println!("class {i:2} rep {rep} size {:3} k(c,0) spectral {spectral:.6} orbit average {averaged:.6}", class.size);
    }
    Ok(())
}
