//! Prior draws three ways: exact Cholesky, truncated Walsh features and
//! random-phase zonal features, compared by their empirical variance.
use graphgp::gp::{sample_prior_exact, FeatureMode, FeatureSampler, GpKernel};
use graphgp::{GraphSpace, GraphSpaceKind, IsotropicKernel, KernelSpec};

fn main() -> graphgp::Result<()> {
    let space = GraphSpace::new(GraphSpaceKind::DirectedNoLoops, 3)?;
    let xs = space.all_codes(8)?;
    let kernel = IsotropicKernel::new(KernelSpec::heat(1.0), space.d())?;
    let draws = 2000;

    let exact = sample_prior_exact(&GpKernel::Isotropic(kernel.clone()), &xs, draws, 1)?;
    let walsh = FeatureSampler::new(kernel.clone(), FeatureMode::TruncatedWalsh { levels: space.d() }, &space)?
        .sample(&xs, draws, 2)?;
    let random = FeatureSampler::new(
        kernel.clone(),
        FeatureMode::RandomPhase { levels: space.d(), anchors: 64, seed: 3 },
        &space,
    )?
    .sample(&xs, draws, 4)?;
    for (name, s) in [("exact", &exact), ("walsh", &walsh), ("random", &random)] {
        let var = s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        println!("{name:6} mean square {var:.3} (target {:.3})", kernel.variance());
    }
    Ok(())
}
