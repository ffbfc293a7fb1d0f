//! How far training graphs are from the inference graph: virtual-node
//! insertion against plain node removal.
//!
//! ```bash
//! cargo run --release --example graph_gap -- 207 0.5
//! ```

use anyhow::Result;

use kits::cli::{graph_gap, prepare, Settings};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let nodes: usize = args.next().map_or(Ok(207), |a| a.parse())?;
    let alpha: f64 = args.next().map_or(Ok(0.5), |a| a.parse())?;

    let mut settings = Settings { dataset: format!("synth:{nodes}:200"), ..Settings::default() };
    settings.train.alpha = alpha;
    let prepared = prepare(&settings)?;
    let r = graph_gap(&prepared.task, &settings, 1000)?;

    println!("{nodes} nodes, alpha {alpha}, {} of them observed", prepared.task.observed().len());
    println!(
        "inference graph: largest degree {}, mean degree {:.2}",
        r.inference_largest_degree, r.inference_mean_degree
    );
    for (name, s, gap) in
        [("increment", &r.increment, r.increment_relative_gap), ("decrement", &r.decrement, r.decrement_relative_gap)]
    {
        println!(
            "{name:<10} largest degree avg {:>7.3}  median {:>5.1}  range {}..{}  relative gap {:>6.1}%",
            s.avg,
            s.median,
            s.min,
            s.max,
            100.0 * gap
        );
    }
    Ok(())
}
