use std::sync::Arc;

use super::{Bound, LayerVars, ModelParams};
use crate::error::{KitsError, Result};
use crate::graph::SpatialGraph;
use crate::tensor::{cosine_with_norms, norm, SparseMatrix, Tape, Tensor, Var};

/// Shape of a feature batch: `samples × steps × nodes` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub samples: usize,
    pub steps: usize,
    pub nodes: usize,
}

impl Layout {
    pub fn new(samples: usize, steps: usize, nodes: usize) -> Self {
        Self { samples, steps, nodes }
    }

    pub fn rows(&self) -> usize {
        self.samples * self.steps * self.nodes
    }

    pub fn row(&self, sample: usize, step: usize, node: usize) -> usize {
        (sample * self.steps + step) * self.nodes + node
    }

    fn slices(&self) -> usize {
        self.samples * self.steps
    }
}

/// Row-normalised, self-loop-free aggregation operator.
#[derive(Clone, Debug)]
pub struct GraphOp {
    op: Arc<SparseMatrix>,
}

impl GraphOp {
    /// `graph` must already have its diagonal removed.
    pub fn new(graph: &SpatialGraph) -> Result<Self> {
        if graph.has_self_loops() {
            return Err(KitsError::Contract("convolution needs an adjacency without self-loops".into()));
        }
        Ok(Self { op: Arc::new(graph.row_normalized()) })
    }

    /// Convenience for graphs that may still carry self-loops.
    pub fn without_self_loops(graph: &SpatialGraph) -> Self {
        Self { op: Arc::new(graph.without_self_loops().row_normalized()) }
    }

    pub fn n_nodes(&self) -> usize {
        self.op.n_rows()
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.op
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add(y, b)
}

/// One convolution block: aggregate neighbours with the self-loop-free
/// operator, stack the `2m + 1` surrounding time steps (edges replicated),
/// apply the graph-convolution weights, then a fully connected layer + relu.
pub fn stgc_forward(
    tape: &mut Tape,
    h: Var,
    layout: Layout,
    graph: &GraphOp,
    layer: &LayerVars,
    window: usize,
) -> Result<Var> {
    if graph.n_nodes() != layout.nodes {
        return Err(KitsError::Dimension(format!("graph has {} nodes, batch has {}", graph.n_nodes(), layout.nodes)));
    }
    let agg = tape.propagate(&graph.op, h)?;
    let mut parts = Vec::with_capacity(2 * window + 1);
    let m = window as isize;
    for offset in -m..=m {
        if offset == 0 {
            parts.push(agg);
            continue;
        }
        let mut idx = Vec::with_capacity(layout.rows());
        for s in 0..layout.samples {
            for tau in 0..layout.steps {
                let src = (tau as isize + offset).clamp(0, layout.steps as isize - 1) as usize;
                for n in 0..layout.nodes {
                    idx.push(layout.row(s, src, n));
                }
            }
        }
        parts.push(tape.gather_rows(agg, &idx)?);
    }
    let stacked = tape.concat_last(&parts)?;
    let g = linear(tape, stacked, layer.gc_weight, layer.gc_bias)?;
    let f = linear(tape, g, layer.fc_weight, layer.fc_bias)?;
    Ok(tape.relu(f))
}

/// Most-similar partner in the opposite role set, per (sample, step) slice.
///
/// Similarity is `(cos + 1) / 2`; ties go to the lowest node index. Rows
/// whose opposite set is empty get `valid = false` and themselves as partner.
#[derive(Clone, Debug, PartialEq)]
pub struct Pairing {
    pub partner: Vec<usize>,
    pub score: Vec<f64>,
    pub valid: Vec<bool>,
    /// Gap between the best similarity and the next strictly lower one
    /// (infinite if there is none).
    pub margin: Vec<f64>,
}

impl Pairing {
    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn pairing(z: &Tensor, layout: Layout, known: &[bool]) -> Result<Pairing> {
    let rows = layout.rows();
    if z.rank() != 2 || z.shape()[0] != rows || known.len() != rows {
        return Err(KitsError::Dimension(format!(
            "pairing of features {:?} with {} role flags for {} rows",
            z.shape(),
            known.len(),
            rows
        )));
    }
    let d = z.shape()[1];
    let data = z.data();
    let feat = |r: usize| &data[r * d..(r + 1) * d];
    let norms: Vec<f64> = (0..rows).map(|r| norm(feat(r))).collect();
    let mut partner: Vec<usize> = (0..rows).collect();
    let mut score = vec![0.0; rows];
    let mut valid = vec![false; rows];
    let mut margin = vec![f64::INFINITY; rows];
    let n = layout.nodes;
    for slice in 0..layout.slices() {
        let base = slice * n;
        let (kn, un): (Vec<usize>, Vec<usize>) = (base..base + n).partition(|&r| known[r]);
        for (from, to) in [(&kn, &un), (&un, &kn)] {
            if to.is_empty() {
                continue;
            }
            for &r in from.iter() {
                let sims: Vec<f64> =
                    to.iter().map(|&c| 0.5 * (cosine_with_norms(feat(r), feat(c), norms[r], norms[c]) + 1.0)).collect();
                let mut best = (f64::NEG_INFINITY, r);
                for (&c, &s) in to.iter().zip(&sims) {
                    if s > best.0 {
                        best = (s, c);
                    }
                }
                // Exact ties are structural (zero rows, rows with one active
                // unit are parallel) and survive small perturbations, so the
                // lowest-index choice is stable; only strictly lower scores
                // can overtake the winner.
                let second = sims.iter().copied().filter(|&s| s < best.0).fold(f64::NEG_INFINITY, f64::max);
                score[r] = best.0;
                margin[r] = best.0 - second;
                partner[r] = best.1;
                valid[r] = true;
            }
        }
    }
    Ok(Pairing { partner, score, valid, margin })
}

pub struct RffOutput {
    pub fused: Var,
    pub pairing: Pairing,
}

fn fuse(tape: &mut Tape, z: Var, layout: Layout, known: &[bool], w: Var, b: Var) -> Result<RffOutput> {
    let pairing = pairing(tape.value(z), layout, known)?;
    let aligned = tape.gather_rows(z, &pairing.partner)?;
    let cos = tape.row_cosine(z, aligned)?;
    let shifted = tape.add_scalar(cos, 1.0);
    let sim = tape.scale(shifted, 0.5);
    let valid =
        Tensor::new(vec![layout.rows(), 1], pairing.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect())?;
    let valid = tape.constant(valid);
    let sim = tape.mul(sim, valid)?;
    let weighted = tape.mul(aligned, sim)?;
    let cat = tape.concat_last(&[z, weighted])?;
    let fused = linear(tape, cat, w, b)?;
    Ok(RffOutput { fused, pairing })
}

/// Fuses each node's features with those of its most similar node in the
/// opposite role set: `FC(z ‖ S*·z_partner)`. Every slice must contain
/// both roles.
pub fn rff_forward(tape: &mut Tape, z: Var, layout: Layout, known: &[bool], w: Var, b: Var) -> Result<RffOutput> {
    if known.len() != layout.rows() {
        return Err(KitsError::Dimension(format!("{} role flags for {} rows", known.len(), layout.rows())));
    }
    for slice in known.chunks(layout.nodes.max(1)) {
        if !slice.iter().any(|&k| k) || slice.iter().all(|&k| k) {
            return Err(KitsError::Contract("fusion needs at least one node of each role".into()));
        }
    }
    fuse(tape, z, layout, known, w, b)
}

/// `x` is `[R, 1]`; returns estimates of the same shape. `known[r]` marks
/// rows that carry an input reading.
pub fn kriging_forward(
    tape: &mut Tape,
    params: &Bound,
    x: Var,
    layout: Layout,
    graph: &GraphOp,
    known: &[bool],
) -> Result<Var> {
    Ok(kriging_forward_traced(tape, params, x, layout, graph, known)?.0)
}

/// [`kriging_forward`] that also returns the pairing chosen in every block.
pub fn kriging_forward_traced(
    tape: &mut Tape,
    params: &Bound,
    x: Var,
    layout: Layout,
    graph: &GraphOp,
    known: &[bool],
) -> Result<(Var, Vec<Pairing>)> {
    if tape.value(x).shape() != [layout.rows(), 1] {
        return Err(KitsError::Dimension(format!(
            "input {:?} does not match {} rows",
            tape.value(x).shape(),
            layout.rows()
        )));
    }
    if known.len() != layout.rows() {
        return Err(KitsError::Dimension(format!("{} role flags for {} rows", known.len(), layout.rows())));
    }
    let cfg = params.config;
    let (w_in, b_in) = params.input();
    let mut h = linear(tape, x, w_in, b_in)?;
    let mut pairings = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let layer = params.layer(l);
        h = stgc_forward(tape, h, layout, graph, &layer, cfg.window)?;
        let out = fuse(tape, h, layout, known, layer.rff_weight, layer.rff_bias)?;
        h = out.fused;
        pairings.push(out.pairing);
    }
    let (w_out, b_out) = params.readout();
    Ok((linear(tape, h, w_out, b_out)?, pairings))
}

/// First-pass estimates, the role-swapped input and the second-pass estimates.
#[derive(Clone, Debug)]
pub struct KrigingOutput {
    pub x_hat: Var,
    pub x_cycle: Var,
    pub x_hat_cycle: Var,
    /// Pairings of every fusion block, first pass then second pass.
    pub pairings: Vec<Pairing>,
}

impl KrigingOutput {
    pub fn min_margin(&self) -> f64 {
        self.pairings.iter().map(Pairing::min_margin).fold(f64::INFINITY, f64::min)
    }
}

fn check_binary(mask: &[f64], rows: usize) -> Result<()> {
    if mask.len() != rows {
        return Err(KitsError::Dimension(format!("mask of {} entries for {} rows", mask.len(), rows)));
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(KitsError::Contract("observation mask must be binary".into()));
    }
    Ok(())
}

/// `X̂ = KM(M⊙X)`, `Xᶜ = (1 − M)⊙X̂`, `X̂ᶜ = KM(Xᶜ)` with shared parameters.
pub fn ncr_pass(
    tape: &mut Tape,
    params: &Bound,
    x: Var,
    mask: &[f64],
    layout: Layout,
    graph: &GraphOp,
) -> Result<KrigingOutput> {
    check_binary(mask, layout.rows())?;
    let m = tape.constant(Tensor::new(vec![layout.rows(), 1], mask.to_vec())?);
    let inv = tape.constant(Tensor::new(vec![layout.rows(), 1], mask.iter().map(|v| 1.0 - v).collect())?);
    let known: Vec<bool> = mask.iter().map(|&v| v == 1.0).collect();
    let swapped: Vec<bool> = known.iter().map(|k| !k).collect();

    let x_in = tape.mul(x, m)?;
    let (x_hat, mut pairings) = kriging_forward_traced(tape, params, x_in, layout, graph, &known)?;
    let x_cycle = tape.mul(x_hat, inv)?;
    let (x_hat_cycle, second) = kriging_forward_traced(tape, params, x_cycle, layout, graph, &swapped)?;
    pairings.extend(second);
    Ok(KrigingOutput { x_hat, x_cycle, x_hat_cycle, pairings })
}

fn masked_mae(tape: &mut Tape, a: Var, b: Var, mask: &[f64]) -> Result<Var> {
    let count = mask.iter().filter(|&&v| v != 0.0).count();
    if count == 0 {
        return Err(KitsError::Contract("loss index set is empty".into()));
    }
    let diff = tape.sub(a, b)?;
    let abs = tape.abs(diff);
    let m = tape.constant(Tensor::new(tape.value(abs).shape().to_vec(), mask.to_vec())?);
    let kept = tape.mul(abs, m)?;
    let total = tape.sum(kept);
    Ok(tape.scale(total, 1.0 / count as f64))
}

/// `MAE(X̂, X | labels) + λ·MAE(X̂ᶜ, X̂)` with the pseudo-label side detached.
pub fn loss(tape: &mut Tape, out: &KrigingOutput, x: Var, labels: &[f64], lambda: f64) -> Result<Var> {
    let target = tape.detach(out.x_hat);
    loss_with_target(tape, out, x, labels, lambda, target)
}

/// Same as [`loss`] but with an explicit pseudo-label tensor.
pub fn loss_with_target(
    tape: &mut Tape,
    out: &KrigingOutput,
    x: Var,
    labels: &[f64],
    lambda: f64,
    target: Var,
) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(KitsError::Config(format!("lambda must be nonnegative, got {}", lambda)));
    }
    check_binary(labels, tape.value(x).numel())?;
    let supervised = masked_mae(tape, out.x_hat, x, labels)?;
    if lambda == 0.0 {
        return Ok(supervised);
    }
    let diff = tape.sub(out.x_hat_cycle, target)?;
    let abs = tape.abs(diff);
    let cycle = tape.mean(abs);
    let cycle = tape.scale(cycle, lambda);
    tape.add(supervised, cycle)
}

/// Inference without gradients: first-pass estimates for every row.
pub fn predict(params: &ModelParams, graph: &GraphOp, x: &[f64], mask: &[f64], layout: Layout) -> Result<Vec<f64>> {
    check_binary(mask, layout.rows())?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let input: Vec<f64> = x.iter().zip(mask).map(|(v, m)| v * m).collect();
    let xv = tape.constant(Tensor::new(vec![layout.rows(), 1], input)?);
    let known: Vec<bool> = mask.iter().map(|&v| v == 1.0).collect();
    let out = kriging_forward(&mut tape, &bound, xv, layout, graph, &known)?;
    Ok(tape.value(out).data().to_vec())
}
