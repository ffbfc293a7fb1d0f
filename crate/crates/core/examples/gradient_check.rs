//! Reverse-mode gradients of the full kriging model, checked against
//! central finite differences.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kits::graph::SpatialGraph;
use kits::model::{loss, loss_with_target, ncr_pass, Bound, GraphOp, Layout, ModelConfig, ModelParams};
use kits::tensor::{grad_check_piecewise, Tape, Tensor, Var};

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 6;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.5 {
                w[i * n + j] = rng.random_range(0.1..1.0);
            }
        }
    }
    let graph = GraphOp::new(&SpatialGraph::observed(n, w, None)?)?;
    let config = ModelConfig { dim: 4, window: 1, layers: 2 };
    let params = ModelParams::init(config, &mut rng)?;
    let layout = Layout::new(1, 4, n);
    let x = Tensor::new(vec![layout.rows(), 1], (0..layout.rows()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let mask: Vec<f64> = (0..layout.rows()).map(|r| if r % n < 4 { 1.0 } else { 0.0 }).collect();

    // one ordinary backward pass
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let out = ncr_pass(&mut tape, &bound, xv, &mask, layout, &graph)?;
    let l = loss(&mut tape, &out, xv, &mask, 1.0)?;
    tape.backward(l)?;
    println!("loss {:.6}, tape of {} nodes, {} parameters", tape.value(l).item()?, tape.len(), params.n_scalars());

    // the pseudo-label side is detached, so hold it fixed while perturbing
    let target = tape.value(out.x_hat).clone();
    let f = |tape: &mut Tape, vars: &[Var]| -> kits::Result<(Var, Vec<usize>)> {
        let bound = Bound::from_vars(config, vars.to_vec())?;
        let xv = tape.constant(x.clone());
        let out = ncr_pass(tape, &bound, xv, &mask, layout, &graph)?;
        let target = tape.constant(target.clone());
        let l = loss_with_target(tape, &out, xv, &mask, 1.0, target)?;
        // the pairing choices form the branch signature
        Ok((l, out.pairings.iter().flat_map(|p| p.partner.iter().copied()).collect()))
    };
    let check = grad_check_piecewise(f, &params.tensors(), 1e-5)?;
    println!(
        "finite differences: max relative error {:.2e} over {} coordinates ({} skipped next to a kink)",
        check.max_rel_err, check.checked, check.skipped
    );
    Ok(())
}
