//! Classical kriging baselines on a synthetic sensor network.
//!
//! ```bash
//! cargo run --release --example baselines
//! ```

use anyhow::Result;

use kits::baselines::BaselineKind;
use kits::cli::{baseline_metrics, prepare, Settings};

fn main() -> Result<()> {
    let mut settings = Settings { dataset: "synth:60:1000".into(), ..Settings::default() };
    settings.train.alpha = 0.5;
    let prepared = prepare(&settings)?;
    println!(
        "{} nodes, {} unobserved, test split of {} steps",
        prepared.task.n_nodes(),
        prepared.task.unobserved().len(),
        prepared.task.split.test.iter().map(|r| r.len()).sum::<usize>()
    );
    for kind in [BaselineKind::Mean, BaselineKind::Knn, BaselineKind::OKriging] {
        let m = baseline_metrics(&prepared, kind, 10)?;
        println!("{:<10} MAE {:.4}  RMSE {:.4}  MRE {:.4}  R2 {:.4}", format!("{kind:?}"), m.mae, m.rmse, m.mre, m.r2);
    }
    Ok(())
}
