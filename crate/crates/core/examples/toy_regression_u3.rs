//! Exact GP regression on all eight undirected graphs with three nodes.
use graphgp::gp::{GpKernel, GpModel};
use graphgp::{GraphSpace, GraphSpaceKind, IsotropicKernel, KernelSpec};

fn main() -> graphgp::Result<()> {
    let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 3)?;
    let all = space.all_codes(8)?;
    // target: number of edges, observed on half the graphs
    let train: Vec<_> = all.iter().filter(|c| c.bit(0)).cloned().collect();
    let ys: Vec<f64> = train.iter().map(|c| c.weight() as f64).collect();

    let kernel = GpKernel::Isotropic(IsotropicKernel::new(KernelSpec::matern(1.5, 1.0), space.d())?);
    let model = GpModel::fit_standardized(kernel, &train, &ys, 0.01)?;
    let (means, vars) = model.predict_marginals(&all)?;
    println!("graph edges mean   sd");
    for ((code, mean), var) in all.iter().zip(&means).zip(&vars) {
        println!("{code}   {}  {mean:+.3} {:.3}", code.weight(), var.sqrt());
    }
    println!("log marginal likelihood {:.4}", model.log_marginal_likelihood());
    Ok(())
}
