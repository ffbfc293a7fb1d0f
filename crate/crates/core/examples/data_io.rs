//! Writing a dataset to CSV and reading it back, then building the
//! thresholded Gaussian-kernel graph over it.
//!
//! ```bash
//! cargo run --release --example data_io
//! ```

use anyhow::Result;

use kits::data::{load, save_readings, save_topology, synth_generate, SynthConfig, TopologyFormat};

fn main() -> Result<()> {
    let dir = tempfile_dir()?;
    let ds = synth_generate(&SynthConfig::new(40, 300, 1, 2))?;
    save_readings(&ds, &dir.join("readings.csv"))?;
    save_topology(&ds, &dir.join("topology.csv"))?;

    let back = load(&dir.join("readings.csv"), &dir.join("topology.csv"), TopologyFormat::Auto)?;
    assert_eq!(back.readings, ds.readings);
    let graph = back.adjacency(None, None)?;
    let degrees = graph.undirected_degrees();
    println!("{} nodes x {} steps read from {}", back.n_nodes(), back.n_steps, dir.display());
    println!(
        "adjacency: largest degree {}, mean degree {:.2}, self-loops {}",
        graph.largest_degree(),
        degrees.iter().sum::<usize>() as f64 / degrees.len() as f64,
        graph.has_self_loops()
    );
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("kits-data-io");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
