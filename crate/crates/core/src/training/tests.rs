use proptest::prelude::{prop, prop_assert, proptest};

use super::*;
use crate::data::{split_7_1_2, synth_generate, NormScheme, SynthConfig};
use crate::graph::{apply_missing, virtual_count, MissingPattern};

fn toy_task(n: usize, steps: usize, seed: u64) -> (Task, Normalization, Vec<f64>) {
    let ds = synth_generate(&SynthConfig::new(n, steps, seed, seed + 1)).unwrap();
    let graph = ds.adjacency(None, None).unwrap();
    let roles = apply_missing(&graph, &MissingPattern::random(0.5, seed)).unwrap();
    let graph = graph.with_roles(roles).unwrap();
    let split = split_7_1_2(steps);
    let norm =
        Normalization::fit(&ds, NormScheme::ZScore, &split.train, &graph.nodes_with_role(Role::Observed)).unwrap();
    let values = norm.apply(&ds.readings, n);
    (Task::new(graph, values, split).unwrap(), norm, ds.readings)
}

fn small_config(strategy: Strategy) -> TrainConfig {
    TrainConfig {
        window: 6,
        batch_size: 4,
        model: ModelConfig { dim: 8, window: 1, layers: 2 },
        lr: 5e-3,
        max_epochs: 5,
        patience: 5,
        max_batches_per_epoch: 4,
        strategy,
        ..TrainConfig::default()
    }
}

#[test]
fn cosine_schedule_examples() {
    assert_eq!(cosine_lr(0, 100, 2e-4), 2e-4);
    assert!(cosine_lr(100, 100, 2e-4).abs() < 1e-20);
    assert!((cosine_lr(50, 100, 2e-4) - 1e-4).abs() < 1e-18);
    let mut last = f64::INFINITY;
    for s in 0..=100 {
        let lr = cosine_lr(s, 100, 1.0);
        assert!(lr <= last);
        last = lr;
    }
}

#[test]
fn zero_gradients_leave_fresh_parameters_unchanged_and_decay_moments() {
    let mut p = vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
    let before = p.clone();
    let mut state = AdamState::new(&p);
    adam_step(p.iter_mut(), &[Tensor::zeros(&[3])], &mut state, 0.1).unwrap();
    assert_eq!(p, before);

    adam_step(p.iter_mut(), &[Tensor::new(vec![3], vec![1.0, 1.0, 1.0]).unwrap()], &mut state, 0.1).unwrap();
    let m = state.first_moment(0).to_vec();
    let v = state.second_moment(0).to_vec();
    adam_step(p.iter_mut(), &[Tensor::zeros(&[3])], &mut state, 0.1).unwrap();
    for i in 0..3 {
        assert_eq!(state.first_moment(0)[i], 0.9 * m[i]);
        assert_eq!(state.second_moment(0)[i], 0.999 * v[i]);
    }
}

#[test]
fn clipping_scales_a_norm_ten_gradient_by_a_tenth() {
    let mut g = vec![Tensor::new(vec![2], vec![6.0, 8.0]).unwrap()];
    let before = clip_global_norm(&mut g, 1.0);
    assert_eq!(before, 10.0);
    assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    assert!((g[0].data()[1] - 0.8).abs() < 1e-15);
    let mut small = vec![Tensor::new(vec![2], vec![0.3, 0.4]).unwrap()];
    clip_global_norm(&mut small, 1.0);
    assert_eq!(small[0].data(), &[0.3, 0.4]);
}

proptest! {
    #[test]
    fn clipping_never_increases_the_norm(vals in prop::collection::vec(-100.0f64..100.0, 1..20), clip in 0.01f64..10.0) {
        let mut g = vec![Tensor::new(vec![vals.len()], vals).unwrap()];
        let before = global_norm(&g);
        clip_global_norm(&mut g, clip);
        let after = global_norm(&g);
        prop_assert!(after <= before + 1e-12);
        prop_assert!(after <= clip + 1e-12);
    }
}

#[test]
fn adam_minimises_a_one_parameter_quadratic_monotonically() {
    // f(w) = (w - 3)², f'(w) = 2(w - 3)
    let mut p = vec![Tensor::new(vec![1], vec![0.0]).unwrap()];
    let mut state = AdamState::new(&p);
    let f = |w: f64| (w - 3.0) * (w - 3.0);
    let mut last = f(0.0);
    for step in 0..200 {
        let w = p[0].data()[0];
        let g = vec![Tensor::new(vec![1], vec![2.0 * (w - 3.0)]).unwrap()];
        adam_step(p.iter_mut(), &g, &mut state, cosine_lr(step, 200, 0.06)).unwrap();
        let now = f(p[0].data()[0]);
        assert!(now <= last, "step {step}: {now} > {last}");
        last = now;
    }
    assert!(last < 1e-3, "{last}");
}

#[test]
fn non_finite_gradients_are_rejected_without_touching_state() {
    let mut p = vec![Tensor::new(vec![1], vec![1.0]).unwrap()];
    let mut state = AdamState::new(&p);
    let before = state.clone();
    let err = adam_step(p.iter_mut(), &[Tensor::new(vec![1], vec![f64::NAN]).unwrap()], &mut state, 0.1);
    assert!(matches!(err, Err(KitsError::Training(_))));
    assert_eq!(state, before);
    assert_eq!(p[0].data(), &[1.0]);
}

#[test]
fn increment_batches_add_the_virtual_count_and_keep_the_observed_block() {
    let (task, _, _) = toy_task(36, 200, 3);
    let n_o = task.observed().len();
    let obs = task.observed_graph().unwrap();
    let cfg = small_config(Strategy::Increment);
    let mut wr = stream_rng(1, Stream::Batch);
    let mut gr = stream_rng(1, Stream::Augment);
    let mut sizes = Vec::new();
    for _ in 0..10 {
        let b = make_batch(&task, &cfg, &mut wr, &mut gr).unwrap();
        let n_b = b.graph.n_nodes();
        let n_v = b.n_virtual();
        assert_eq!(n_b, n_o + n_v);
        assert!(n_v <= virtual_count(n_o, cfg.alpha, 0.0) && n_v >= virtual_count(n_o, cfg.alpha, 0.2));
        for i in 0..n_o {
            for j in 0..n_o {
                assert_eq!(b.graph.weight(i, j), obs.weight(i, j));
            }
        }
        for (r, (&m, &l)) in b.input_mask.iter().zip(&b.label_mask).enumerate() {
            let node = r % n_b;
            assert_eq!(m, if node < n_o { 1.0 } else { 0.0 });
            assert_eq!(m, l);
            if node >= n_o {
                assert_eq!(b.x[r], 0.0);
            }
        }
        assert!(!b.graph.has_self_loops());
        sizes.push(n_b);
    }
    sizes.dedup();
    assert!(sizes.len() > 1, "the batch graph should vary between batches");
}

#[test]
fn decrement_batches_keep_the_observed_node_count_and_hide_some_inputs() {
    let (task, _, _) = toy_task(30, 200, 4);
    let n_o = task.observed().len();
    let cfg = small_config(Strategy::Decrement);
    let mut wr = stream_rng(2, Stream::Batch);
    let mut gr = stream_rng(2, Stream::Augment);
    for _ in 0..5 {
        let b = make_batch(&task, &cfg, &mut wr, &mut gr).unwrap();
        assert_eq!(b.graph.n_nodes(), n_o);
        let hidden = (0..n_o).filter(|&i| b.input_mask[i] == 0.0).count();
        assert_eq!(hidden, (0.5 * n_o as f64).round() as usize);
        assert!(b.label_mask.iter().all(|&l| l == 1.0));
        for (r, &m) in b.input_mask.iter().enumerate() {
            assert_eq!(b.x[r], m * b.y[r]);
        }
    }
}

#[test]
fn transductive_batches_use_the_full_graph_without_unobserved_readings() {
    let (task, _, _) = toy_task(20, 100, 5);
    let cfg = small_config(Strategy::Transductive);
    let b = make_batch(&task, &cfg, &mut stream_rng(1, Stream::Batch), &mut stream_rng(1, Stream::Augment)).unwrap();
    assert_eq!(b.graph.n_nodes(), 20);
    for (r, &m) in b.input_mask.iter().enumerate() {
        let observed = task.graph.roles()[r % 20] == Role::Observed;
        assert_eq!(m == 1.0, observed);
        if !observed {
            assert_eq!(b.y[r], 0.0);
        }
    }
}

#[test]
fn equal_rng_states_give_identical_batches() {
    let (task, _, _) = toy_task(24, 120, 6);
    let cfg = small_config(Strategy::Increment);
    let a = make_batch(&task, &cfg, &mut stream_rng(7, Stream::Batch), &mut stream_rng(7, Stream::Augment)).unwrap();
    let b = make_batch(&task, &cfg, &mut stream_rng(7, Stream::Batch), &mut stream_rng(7, Stream::Augment)).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.graph, b.graph);
    assert_eq!(a.starts, b.starts);
}

#[test]
fn too_short_training_segment_is_a_data_error() {
    let (task, _, _) = toy_task(12, 20, 1);
    let mut cfg = small_config(Strategy::Increment);
    cfg.window = 50;
    let err = make_batch(&task, &cfg, &mut stream_rng(1, Stream::Batch), &mut stream_rng(1, Stream::Augment));
    assert!(matches!(err, Err(KitsError::Data(_))));
}

fn zero_params(cfg: ModelConfig) -> ModelParams {
    let mut p = ModelParams::init(cfg, &mut stream_rng(0, Stream::Init)).unwrap();
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    p
}

#[test]
fn zero_predictor_validation_mae_is_the_mean_absolute_hidden_reading() {
    let (task, _, _) = toy_task(30, 300, 8);
    let cfg = small_config(Strategy::Increment);
    let validator = Validator::new(&task, &cfg).unwrap();
    let observed = task.observed();
    let hidden: Vec<usize> = validator.hidden().into_iter().map(|i| observed[i]).collect();
    assert_eq!(hidden.len(), (0.2 * observed.len() as f64).round() as usize);
    let mut sum = 0.0;
    let mut count = 0;
    for r in &task.split.val {
        for s in r.clone() {
            for &j in &hidden {
                sum += task.value(s, j).abs();
                count += 1;
            }
        }
    }
    let report = validator.validate(&zero_params(cfg.model)).unwrap();
    assert_eq!(report.n_points, count);
    assert!((report.mae - sum / count as f64).abs() < 1e-12);
    let params = ModelParams::init(cfg.model, &mut stream_rng(3, Stream::Init)).unwrap();
    assert_eq!(validate(&params, &task, &cfg).unwrap(), validate(&params, &task, &cfg).unwrap());
}

#[test]
fn perfect_estimates_score_zero() {
    let (task, _, _) = toy_task(30, 300, 8);
    let validator = Validator::new(&task, &small_config(Strategy::Increment)).unwrap();
    assert_eq!(validator.score(&validator.labels()).unwrap().mae, 0.0);
}

#[test]
fn reconstruction_covers_every_step_once() {
    assert_eq!(tiling(&[0..10], 4), vec![(0, 4, 0), (4, 4, 4), (6, 4, 8)]);
    assert_eq!(tiling(&[3..5, 7..15], 4), vec![(3, 2, 3), (7, 4, 7), (11, 4, 11)]);
    let (task, _, _) = toy_task(16, 60, 2);
    let params =
        ModelParams::init(ModelConfig { dim: 4, window: 1, layers: 1 }, &mut stream_rng(1, Stream::Init)).unwrap();
    let known: Vec<bool> = task.graph.roles().iter().map(|&r| r == Role::Observed).collect();
    let op = GraphOp::new(&task.graph).unwrap();
    let est = reconstruct(&params, &op, &task.values, &known, &[5..18, 30..33], 4).unwrap();
    assert_eq!(est.len(), 16 * 16);
    // 5..18 tiles as 5..9, 9..13, 13..17 and a shifted 14..18 that only
    // contributes step 17; each window sees its own steps only
    let third = reconstruct(&params, &op, &task.values, &known, &[13..17], 4).unwrap();
    assert_eq!(&est[8 * 16..12 * 16], &third[..]);
    let shifted = reconstruct(&params, &op, &task.values, &known, &[14..18], 4).unwrap();
    assert_eq!(&est[12 * 16..13 * 16], &shifted[3 * 16..]);
}

#[test]
fn patience_zero_runs_exactly_one_epoch() {
    let (task, _, _) = toy_task(16, 120, 1);
    let mut cfg = small_config(Strategy::Increment);
    cfg.patience = 0;
    let out = train(&task, &cfg).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.best_epoch, 0);
}

#[test]
fn history_matches_epochs_and_best_checkpoint_is_the_minimum() {
    let (task, _, _) = toy_task(16, 120, 2);
    let mut cfg = small_config(Strategy::Decrement);
    cfg.max_epochs = 6;
    cfg.patience = 2;
    let out = train(&task, &cfg).unwrap();
    assert!(out.history.len() <= 6);
    for (i, r) in out.history.iter().enumerate() {
        assert_eq!(r.epoch, i);
        assert!(out.best_val_mae <= r.val_mae);
    }
    assert_eq!(validate(&out.params, &task, &cfg).unwrap().mae, out.best_val_mae);
    let lines: Vec<EpochRecord> = out.history_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines, out.history);
}

#[test]
fn training_lowers_the_loss_on_a_six_node_diffusion() {
    let ds = synth_generate(&SynthConfig::new(6, 300, 11, 12)).unwrap();
    let graph = ds.adjacency(None, None).unwrap();
    let mut roles = vec![Role::Observed; 6];
    roles[5] = Role::Unobserved;
    let graph = graph.with_roles(roles).unwrap();
    let split = split_7_1_2(300);
    let norm = Normalization::fit(&ds, NormScheme::ZScore, &split.train, &[0, 1, 2, 3, 4]).unwrap();
    let task = Task::new(graph, norm.apply(&ds.readings, 6), split).unwrap();
    let mut cfg = small_config(Strategy::Increment);
    cfg.max_epochs = 50;
    cfg.patience = 50;
    let out = train(&task, &cfg).unwrap();
    assert_eq!(out.history.len(), 50);
    let first = out.history[0].train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn identical_configs_give_identical_checkpoints() {
    let (task, _, _) = toy_task(16, 120, 3);
    let cfg = small_config(Strategy::Increment);
    let a = train(&task, &cfg).unwrap();
    let b = train(&task, &cfg).unwrap();
    assert_eq!(a.params.to_bytes(), b.params.to_bytes());
    assert_eq!(a.history_jsonl(), b.history_jsonl());
}

#[test]
fn metrics_are_reported_in_original_units() {
    let (task, norm, raw) = toy_task(20, 150, 9);
    let cfg = small_config(Strategy::Increment);
    let params = zero_params(cfg.model);
    let report = evaluate_unobserved(&params, &task, &task.split.test, cfg.window, &norm, &raw).unwrap();
    // a zero output in normalised units is the training mean in original units
    let Normalization::ZScore { mean, .. } = norm else { panic!("z-score expected") };
    let n = 20;
    let unobserved = task.unobserved();
    let mut sum = 0.0;
    let mut count = 0;
    for s in task.split.test[0].clone() {
        for &j in &unobserved {
            sum += (raw[s * n + j] - mean).abs();
            count += 1;
        }
    }
    assert_eq!(report.n_points, count);
    assert!((report.mae - sum / count as f64).abs() < 1e-9);
}

#[test]
fn config_checks() {
    assert!(TrainConfig::default().check().is_ok());
    let c = TrainConfig { patience: 301, ..TrainConfig::default() };
    assert!(matches!(c.check(), Err(KitsError::Config(_))));
    let c = TrainConfig { alpha: 1.0, ..TrainConfig::default() };
    assert!(c.check().is_err());
    assert_eq!("decrement".parse::<Strategy>().unwrap(), Strategy::Decrement);
    assert!("sideways".parse::<Strategy>().is_err());
}
