use super::{Tape, Tensor, Var};
use crate::error::{KitsError, Result};

/// Evaluates a scalar tape function on fresh leaves built from `inputs`.
fn eval_value<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out).item()?;
    if !v.is_finite() {
        return Err(KitsError::Evaluation(format!("function value is not finite: {}", v)));
    }
    Ok(v)
}

/// Central difference of `f` with respect to every coordinate of every input.
pub fn central_difference<F>(f: &F, inputs: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].numel() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let up = eval_value(f, &work)?;
            work[k].data_mut()[i] = x0 - h;
            let down = eval_value(f, &work)?;
            work[k].data_mut()[i] = x0;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Maximum relative error between tape gradients and central differences,
/// over all coordinates of all inputs.
///
/// Relative error is `|analytic - numeric| / max(1e-8, |numeric|)`.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).item()?.is_finite() {
        return Err(KitsError::Evaluation("function value is not finite".into()));
    }
    tape.backward(out)?;
    let numeric = central_difference(&f, inputs, h)?;
    let mut worst = 0.0f64;
    for (v, num) in vars.iter().zip(&numeric) {
        let zeros;
        let analytic = match tape.grad(*v) {
            Some(g) => g,
            None => {
                zeros = Tensor::zeros(num.shape());
                &zeros
            }
        };
        for (a, n) in analytic.data().iter().zip(num.data()) {
            worst = worst.max((a - n).abs() / n.abs().max(1e-8));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape: &mut Tape, vars: &[Var]| f(tape, vars[0]), std::slice::from_ref(x), h)
}

/// Outcome of [`grad_check_piecewise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiecewiseCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose ±h perturbation changed the branch structure.
    pub skipped: usize,
}

/// Gradient check for piecewise-smooth functions.
///
/// `f` returns its scalar output plus a discrete signature of any data-dependent
/// choices it made (e.g. argmax indices). A coordinate is compared only when
/// the signature and the relu/abs sign pattern are identical at `x - h`, `x`
/// and `x + h`, so the central difference never straddles a kink or a switch.
///
/// Relative error here is `|analytic - numeric| / max(1e-6, |analytic|, |numeric|)`:
/// the floor sits well above the cancellation noise of a central difference
/// (about `ulp(f) / 2h`), so exactly-zero gradients are not judged on roundoff.
pub fn grad_check_piecewise<F>(f: F, inputs: &[Tensor], h: f64) -> Result<PiecewiseCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<(Var, Vec<usize>)>,
{
    let eval = |xs: &[Tensor]| -> Result<(f64, Vec<usize>, Vec<i8>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let (out, sig) = f(&mut tape, &vars)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(KitsError::Evaluation(format!("function value is not finite: {}", v)));
        }
        Ok((v, sig, tape.kink_pattern()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let (out, _) = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect();

    let (_, sig0, pat0) = eval(inputs)?;
    let mut work = inputs.to_vec();
    let mut result = PiecewiseCheck { max_rel_err: 0.0, checked: 0, skipped: 0 };
    for k in 0..inputs.len() {
        for i in 0..inputs[k].numel() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let (up, sig_up, pat_up) = eval(&work)?;
            work[k].data_mut()[i] = x0 - h;
            let (down, sig_down, pat_down) = eval(&work)?;
            work[k].data_mut()[i] = x0;
            if sig_up != sig0 || sig_down != sig0 || pat_up != pat0 || pat_down != pat0 {
                result.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].data()[i];
            result.max_rel_err = result.max_rel_err.max((a - numeric).abs() / numeric.abs().max(a.abs()).max(1e-6));
            result.checked += 1;
        }
    }
    Ok(result)
}
