//! Heat and Matérn profiles k(m) on a large cube, with the heat closed form.
use graphgp::kernels::heat_closed_form;
use graphgp::{IsotropicKernel, KernelSpec, LaplacianVariant};

fn main() -> graphgp::Result<()> {
    let d = 36;
    let heat = IsotropicKernel::new(KernelSpec::heat(1.0).with_laplacian(LaplacianVariant::Plain), d)?;
    let matern = IsotropicKernel::new(KernelSpec::matern_offset(2.5, 1.0), d)?;
    let normalized = IsotropicKernel::new(KernelSpec::heat(1.0), d)?;
    println!("m,heat_plain,closed_form,heat_normalized,matern");
    for m in 0..=d {
        println!(
            "{m},{:.6e},{:.6e},{:.6e},{:.6e}",
            heat.at_distance(m)?,
            heat_closed_form(1.0, 1.0, m)?,
            normalized.at_distance(m)?,
            matern.at_distance(m)?
        );
    }
    Ok(())
}
