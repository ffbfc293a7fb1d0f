//! Increment against decrement and transductive training, with identical
//! budgets and seeds.
//!
//! ```bash
//! cargo run --release --example ablation -- 3
//! ```

use anyhow::Result;

use kits::cli::{prepare, test_metrics, Settings};
use kits::training::{train, Strategy};

fn main() -> Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(Ok(3), |a| a.parse())?;
    println!("{:>4}  {:>10}  {:>10}  {:>12}", "seed", "increment", "decrement", "transductive");
    for seed in 1..=seeds {
        let mut row = Vec::new();
        for strategy in [Strategy::Increment, Strategy::Decrement, Strategy::Transductive] {
            let mut s = Settings { dataset: "synth".into(), ..Settings::default() };
            s.train.seed = seed;
            s.train.strategy = strategy;
            s.train.model.dim = 16;
            s.train.batch_size = 8;
            s.train.window = 12;
            s.train.max_batches_per_epoch = 10;
            s.train.max_epochs = 20;
            s.train.patience = 20;
            let prepared = prepare(&s)?;
            let outcome = train(&prepared.task, &s.train)?;
            row.push(test_metrics(&outcome.params, &prepared, s.train.window)?.mae);
        }
        println!("{seed:>4}  {:>10.4}  {:>10.4}  {:>12.4}", row[0], row[1], row[2]);
    }
    Ok(())
}
