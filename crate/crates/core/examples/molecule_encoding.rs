//! Encoding molecules as adjacency codes with the per-element (Graph-A) and
//! first-come (Graph-B) layouts, and decoding them back.
use graphgp::datasets::{self, EncodingLayout, Molecule};

fn main() -> graphgp::Result<()> {
    let ethanol = Molecule {
        id: "ethanol".into(),
        atoms: ["C", "C", "O", "H", "H", "H", "H", "H", "H"].map(String::from).to_vec(),
        bonds: vec![[0, 1], [1, 2], [0, 3], [0, 4], [0, 5], [1, 6], [1, 7], [2, 8]],
        target: -5.0,
    };
    let molecules = [ethanol];
    for layout in [EncodingLayout::graph_a(&[("C", 2), ("O", 1)]), EncodingLayout::graph_b(None)] {
        let layout = layout.resolve(&molecules);
        let code = datasets::encode(&molecules[0], &layout)?;
        let edges = datasets::decode(&code, &layout)?;
        println!("n={} code={code} edges={edges:?}", layout.n()?);
    }
    Ok(())
}
