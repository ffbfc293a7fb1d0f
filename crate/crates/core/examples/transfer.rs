//! A model trained on one network applied to a different one without
//! retraining: the parameters do not depend on the number of nodes.
//!
//! ```bash
//! cargo run --release --example transfer
//! ```

use anyhow::Result;

use kits::baselines::BaselineKind;
use kits::cli::{baseline_metrics, prepare, test_metrics, Settings};
use kits::training::train;

fn main() -> Result<()> {
    let mut source = Settings { dataset: "synth:60:1500:1".into(), ..Settings::default() };
    source.train.model.dim = 16;
    source.train.batch_size = 8;
    source.train.window = 12;
    source.train.max_batches_per_epoch = 10;
    source.train.max_epochs = 15;
    source.train.patience = 15;
    let target = Settings { dataset: "synth:90:1500:5".into(), ..source.clone() };

    let src = prepare(&source)?;
    let outcome = train(&src.task, &source.train)?;
    let dst = prepare(&target)?;
    println!("trained on {} nodes, applied to {} nodes", src.task.n_nodes(), dst.task.n_nodes());

    let own = test_metrics(&outcome.params, &src, source.train.window)?;
    let moved = test_metrics(&outcome.params, &dst, target.train.window)?;
    let mean = baseline_metrics(&dst, BaselineKind::Mean, 10)?;
    println!("source test MAE {:.4}", own.mae);
    println!("target test MAE {:.4} (mean imputation on target {:.4})", moved.mae, mean.mae);
    Ok(())
}
