//! Monte Carlo invariant kernels converge to the exact one as the shared
//! permutation sample grows; every sample size keeps Gram matrices PSD.
use graphgp::invariance::{InvariantKernel, PermSubgroup};
use graphgp::seed;
use graphgp::{GraphSpace, GraphSpaceKind, IsotropicKernel, KernelSpec};

fn main() -> graphgp::Result<()> {
    let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 6)?;
    let group = PermSubgroup::symmetric(6);
    let base = IsotropicKernel::new(KernelSpec::heat(1.5), space.d())?;
    let mut rng = seed::rng(seed::substream(3, "anchors"));
    let xs: Vec<_> = (0..12).map(|_| space.random_code(&mut rng)).collect();

    let exact = InvariantKernel::exact(base.clone(), &space, &group)?.gram_symmetric(&xs)?;
    println!("samples relative_error min_eigenvalue");
    for samples in [4, 16, 64, 256] {
        let mc = InvariantKernel::monte_carlo(base.clone(), &space, &group, samples, 11)?.gram_symmetric(&xs)?;
        let err = (&mc - &exact).norm() / exact.norm();
        let min_eig = mc.symmetric_eigenvalues().min();
        println!("{samples:7} {err:.4} {min_eig:+.2e}");
    }
    Ok(())
}
