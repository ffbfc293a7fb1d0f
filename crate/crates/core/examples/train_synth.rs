//! Train on a synthetic network with virtual-node augmentation, then score
//! the nodes that never had sensors and save the model.
//!
//! ```bash
//! cargo run --release --example train_synth
//! ```

use anyhow::Result;

use kits::baselines::BaselineKind;
use kits::cli::{baseline_metrics, prepare, test_metrics, Settings};
use kits::model::{load_checkpoint, save_checkpoint};
use kits::training::train;

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut settings = Settings { dataset: "synth".into(), ..Settings::default() };
    // a desk-sized budget; the defaults are D = 64, batches of 32 and 300 epochs
    settings.train.alpha = 0.5;
    settings.train.model.dim = 16;
    settings.train.batch_size = 8;
    settings.train.window = 12;
    settings.train.max_batches_per_epoch = 10;
    settings.train.max_epochs = 20;
    settings.train.patience = 10;

    let prepared = prepare(&settings)?;
    let outcome = train(&prepared.task, &settings.train)?;
    println!("best epoch {} (validation MAE {:.4})", outcome.best_epoch, outcome.best_val_mae);

    let model = test_metrics(&outcome.params, &prepared, settings.train.window)?;
    let knn = baseline_metrics(&prepared, BaselineKind::Knn, settings.baseline_k)?;
    println!("test MAE {:.4} (knn {:.4}), R2 {:.4}", model.mae, knn.mae, model.r2);

    let path = std::env::temp_dir().join("kits-train-synth.ckpt");
    save_checkpoint(&outcome.params, &path)?;
    assert_eq!(load_checkpoint(&path)?, outcome.params);
    println!("checkpoint written to {}", path.display());
    Ok(())
}
