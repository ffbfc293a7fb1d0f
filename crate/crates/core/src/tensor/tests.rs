use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::KitsError;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values bounded away from zero, so relu/abs kinks are never crossed.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = random_tensor(rng, shape);
    for v in t.data_mut() {
        *v = v.signum() * (0.05 + v.abs());
    }
    t
}

#[test]
fn matmul_identity_and_selection() {
    let mut tape = Tape::new();
    let eye = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
    let m = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
    let out = tape.matmul(eye, m).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0]]));
    let b = tape.constant(Tensor::from_rows(&[vec![0.0], vec![5.0]]));
    let out = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(out).shape(), &[1, 1]);
    assert_eq!(tape.value(out).data(), &[0.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(KitsError::Dimension(msg)) => {
            assert!(msg.contains("[2, 3]"), "{msg}");
        }
        other => panic!("expected dimension error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_tensor(&mut rng, &[3, 4]);
    let b = random_tensor(&mut rng, &[4, 2]);
    let w = random_tensor(&mut rng, &[3, 2]);
    let err = grad_check_many(
        |tape, v| {
            let p = tape.matmul(v[0], v[1])?;
            let wv = tape.constant(w.clone());
            let q = tape.mul(p, wv)?;
            Ok(tape.sum(q))
        },
        &[a, b],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "rel err {err}");
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);

    let a = tape.constant(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let b = tape.constant(Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
    let m = tape.mul(a, b).unwrap();
    assert_eq!(tape.value(m).data(), &[0.0, 2.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![-3.0, 5.0]).unwrap());
    let y = tape.abs(x);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[-1.0, 1.0]);
}

#[test]
fn kink_adjoints_are_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
    let r = tape.relu(x);
    let a = tape.abs(x);
    let both = tape.add(r, a).unwrap();
    let s = tape.sum(both);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.0]);
    assert_eq!(tape.min_kink_distance(), 0.0);
}

#[test]
fn broadcasting_rows_and_columns() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]));
    let bias = tape.param(Tensor::new(vec![3], vec![10.0, 20.0, 30.0]).unwrap());
    let col = tape.param(Tensor::new(vec![2, 1], vec![2.0, -1.0]).unwrap());
    let s = tape.add(a, bias).unwrap();
    assert_eq!(tape.value(s).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    let p = tape.mul(a, col).unwrap();
    assert_eq!(tape.value(p).data(), &[2.0, 4.0, 6.0, -4.0, -5.0, -6.0]);
    let both = tape.add(s, p).unwrap();
    let l = tape.sum(both);
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(bias).unwrap().data(), &[2.0, 2.0, 2.0]);
    assert_eq!(tape.grad(col).unwrap().data(), &[6.0, 15.0]);

    let bad = tape.constant(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.add(a, bad), Err(KitsError::Dimension(_))));
}

#[test]
fn concat_last_shapes_and_gradients() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::zeros(&[4, 2]));
    let b = tape.param(Tensor::ones(&[4, 3]));
    let c = tape.concat_last(&[a, b]).unwrap();
    assert_eq!(tape.value(c).shape(), &[4, 5]);
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &Tensor::ones(&[4, 2]));
    assert_eq!(tape.grad(b).unwrap(), &Tensor::ones(&[4, 3]));

    let one = tape.concat_last(&[b]).unwrap();
    assert_eq!(tape.value(one), tape.value(b));

    let wrong = tape.param(Tensor::zeros(&[3, 2]));
    assert!(matches!(tape.concat_last(&[a, wrong]), Err(KitsError::Dimension(_))));
}

#[test]
fn gather_rows_examples() {
    let mut tape = Tape::new();
    let rows = tape.param(Tensor::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]));
    let g = tape.gather_rows(rows, &[1, 0]).unwrap();
    assert_eq!(tape.value(g).data(), &[2.0, 2.0, 1.0, 1.0]);

    let dup = tape.gather_rows(rows, &[0, 0]).unwrap();
    let s = tape.sum(dup);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(rows).unwrap().data(), &[2.0, 2.0, 0.0, 0.0]);

    assert!(matches!(tape.gather_rows(rows, &[2]), Err(KitsError::Index(_))));
}

#[test]
fn gather_rows_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_tensor(&mut rng, &[5, 3]);
    let idx: Vec<usize> = (0..7).map(|_| rng.random_range(0..5)).collect();
    let w = random_tensor(&mut rng, &[7, 3]);
    let err = grad_check(
        |tape, v| {
            let g = tape.gather_rows(v, &idx)?;
            let wv = tape.constant(w.clone());
            let p = tape.mul(g, wv)?;
            Ok(tape.sum(p))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "rel err {err}");
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2, 3]));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &Tensor::ones(&[2, 3]));

    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 4.0]);

    // a second sweep accumulates
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[4.0, 8.0]);
    tape.zero_grad();
    assert!(tape.grad(x).is_none());

    assert!(matches!(tape.backward(sq), Err(KitsError::Contract(_))));
}

#[test]
fn detach_stops_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let frozen = tape.detach(x);
    let p = tape.mul(x, frozen).unwrap();
    let s = tape.sum(p);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 2.0]);
}

#[test]
fn grad_check_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, &[4, 3]);
    let err = grad_check(|tape, v| Ok(tape.sum(v)), &x, 1e-5).unwrap();
    assert!(err < 1e-9, "sum: {err}");

    let x = away_from_zero(&mut rng, &[4, 3]);
    let err = grad_check(
        |tape, v| {
            let r = tape.relu(v);
            Ok(tape.sum(r))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "relu: {err}");

    // MAE against a target that is never tied with x
    let x = random_tensor(&mut rng, &[6]);
    let mut target = x.clone();
    for v in target.data_mut() {
        *v += if rng.random::<bool>() { 0.3 } else { -0.3 };
    }
    let err = grad_check(
        |tape, v| {
            let t = tape.constant(target.clone());
            let d = tape.sub(v, t)?;
            let a = tape.abs(d);
            Ok(tape.mean(a))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "mae: {err}");
}

#[test]
fn grad_check_rejects_non_finite_functions() {
    let x = Tensor::new(vec![1], vec![1.0]).unwrap();
    let res = grad_check(
        |tape, v| {
            let s = tape.sum(v);
            Ok(tape.scale(s, f64::INFINITY))
        },
        &x,
        1e-5,
    );
    assert!(matches!(res, Err(KitsError::Evaluation(_))));
}

#[test]
fn propagate_and_cosine_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dense = vec![0.0, 0.5, 0.5, 1.0, 0.0, 0.0, 0.3, 0.7, 0.0];
    let op = Arc::new(SparseMatrix::from_dense(3, 3, &dense));
    let x = random_tensor(&mut rng, &[6, 4]);
    let w = random_tensor(&mut rng, &[6, 4]);
    let err = grad_check(
        |tape, v| {
            let p = tape.propagate(&op, v)?;
            let wv = tape.constant(w.clone());
            let q = tape.mul(p, wv)?;
            Ok(tape.sum(q))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "propagate: {err}");

    let a = random_tensor(&mut rng, &[5, 4]);
    let b = random_tensor(&mut rng, &[5, 4]);
    let w = random_tensor(&mut rng, &[5, 1]);
    let err = grad_check_many(
        |tape, v| {
            let c = tape.row_cosine(v[0], v[1])?;
            let wv = tape.constant(w.clone());
            let q = tape.mul(c, wv)?;
            Ok(tape.sum(q))
        },
        &[a, b],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-5, "cosine: {err}");
}

#[test]
fn propagate_applies_operator_per_slice() {
    let op = Arc::new(SparseMatrix::from_dense(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]));
    let y = tape.propagate(&op, x).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0, 1.0, 4.0, 3.0]);
    let bad = tape.constant(Tensor::zeros(&[3, 1]));
    assert!(tape.propagate(&op, bad).is_err());
}

#[test]
fn zero_norm_rows_have_zero_cosine() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]));
    let b = tape.param(Tensor::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]));
    let c = tape.row_cosine(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[0.0, 1.0]);
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    assert!(tape.grad(a).unwrap().is_finite());
    assert_eq!(&tape.grad(a).unwrap().data()[..2], &[0.0, 0.0]);
}

fn composite_grads(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let wv = tape.param(w.clone());
    let h = tape.matmul(xv, wv).unwrap();
    let r = tape.relu(h);
    let c = tape.concat_last(&[r, h]).unwrap();
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    let mut out = tape.grad(xv).unwrap().data().to_vec();
    out.extend_from_slice(tape.grad(wv).unwrap().data());
    out
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, &[5, 4]);
    let w = random_tensor(&mut rng, &[4, 3]);
    let a = composite_grads(&x, &w);
    let b = composite_grads(&x, &w);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn concat_then_split_is_identity(rows in 1usize..5, widths in prop::collection::vec(1usize..4, 1..4), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let parts: Vec<Var> = widths.iter().map(|&w| tape.param(random_tensor(&mut rng, &[rows, w]))).collect();
        let cat = tape.concat_last(&parts).unwrap();
        let back = tape.split_last(cat, &widths).unwrap();
        let weights: Vec<Tensor> = widths.iter().map(|&w| random_tensor(&mut rng, &[rows, w])).collect();
        let mut terms = Vec::new();
        for ((p, q), w) in parts.iter().zip(&back).zip(&weights) {
            prop_assert_eq!(tape.value(*p), tape.value(*q));
            let wv = tape.constant(w.clone());
            let m = tape.mul(*q, wv).unwrap();
            terms.push(tape.sum(m));
        }
        let mut total = terms[0];
        for t in &terms[1..] {
            total = tape.add(total, *t).unwrap();
        }
        tape.backward(total).unwrap();
        for (p, w) in parts.iter().zip(&weights) {
            prop_assert_eq!(tape.grad(*p).unwrap(), w);
        }
    }
}

proptest! {
    #[test]
    fn precomputed_norm_cosine_is_bit_identical(
        pair in (1usize..9).prop_flat_map(|d| (prop::collection::vec(-3.0f64..3.0, d), prop::collection::vec(-3.0f64..3.0, d)))
    ) {
        let (a, b) = pair;
        prop_assert_eq!(cosine_with_norms(&a, &b, norm(&a), norm(&b)).to_bits(), cosine(&a, &b).to_bits());
        let zero = vec![0.0; a.len()];
        prop_assert_eq!(cosine_with_norms(&a, &zero, norm(&a), 0.0), 0.0);
    }
}
