//! Normalized Kravchuk values for a small cube, checked against the Walsh sum.
use graphgp::kravchuk::{brute_force_g, kravchuk_closed_form};
use graphgp::{GraphSpace, GraphSpaceKind, KravchukTable};

fn main() -> graphgp::Result<()> {
    let table = KravchukTable::build(6)?;
    print!("{}", table.to_csv());

    // U on 4 nodes has d = 6 edge slots
    let space = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 4)?;
    let x = space.code_from_str("110000")?;
    let y = space.code_from_str("011010")?;
    let m = x.hamming(&y)?;
    for j in 0..=6 {
        let walsh = brute_force_g(6, j, &x, &y)?;
        let closed = kravchuk_closed_form(6, j, m)? as f64;
        println!("j={j} m={m} table={:+.6} walsh={walsh:+.6} integer={closed}", table.normalized(j, m)?);
    }
    Ok(())
}
