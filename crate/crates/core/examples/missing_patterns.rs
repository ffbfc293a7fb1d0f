//! The three ways of choosing which nodes lack sensors, drawn on a text grid.
//!
//! ```bash
//! cargo run --release --example missing_patterns
//! ```

use anyhow::Result;

use kits::data::{synth_generate, SynthConfig};
use kits::graph::{apply_missing, MissingKind, MissingPattern, Role};

fn main() -> Result<()> {
    let ds = synth_generate(&SynthConfig::new(120, 10, 3, 4))?;
    let graph = ds.adjacency(None, None)?;
    let coords = ds.coords().expect("synthetic nodes have coordinates").to_vec();
    let (w, h) = (48usize, 16usize);
    for kind in [MissingKind::Random, MissingKind::FineToCoarse, MissingKind::Region] {
        let roles = apply_missing(&graph, &MissingPattern::new(kind, 0.5, 1))?;
        let missing = roles.iter().filter(|r| **r == Role::Unobserved).count();
        println!("{kind:?}: {missing} of {} nodes unobserved (o = sensor, x = none)", roles.len());
        let mut canvas = vec![vec![' '; w]; h];
        for (c, role) in coords.iter().zip(&roles) {
            let col = ((c[0] * (w - 1) as f64).round() as usize).min(w - 1);
            let row = ((c[1] * (h - 1) as f64).round() as usize).min(h - 1);
            canvas[row][col] = if *role == Role::Observed { 'o' } else { 'x' };
        }
        for line in canvas {
            println!("  |{}|", line.into_iter().collect::<String>());
        }
        println!();
    }
    Ok(())
}
