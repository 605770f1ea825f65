use super::*;
use alloc::string::ToString;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frames of 160 samples pushed through a fixed random projection.
#[derive(Debug, Clone)]
struct ProjectionFrontend {
    proj: Array2<f64>,
}

impl ProjectionFrontend {
    fn new(dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        ProjectionFrontend {
            proj: Array2::from_shape_fn((160, dim), |_| rng.random_range(-0.3..0.3)),
        }
    }
}

impl Frontend for ProjectionFrontend {
    fn feature_dim(&self) -> usize {
        self.proj.ncols()
    }
    fn frame_rate_hz(&self) -> f64 {
        100.0
    }
    fn min_samples(&self) -> usize {
        160
    }
    fn features(&self, w: &[f32]) -> Result<Array2<f64>, ProbeError> {
        let t = w.len() / 160;
        let frames = Array2::from_shape_fn((t, 160), |(i, j)| w[i * 160 + j] as f64);
        Ok(frames.dot(&self.proj))
    }
}

fn backbone(blocks: usize, dim: usize) -> Backbone<ProjectionFrontend> {
    let enc = Encoder::seeded(&EncoderConfig {
        input_dim: 12,
        hidden_dim: dim,
        ffn_dim: 2 * dim,
        num_blocks: blocks,
        seed: 5,
    });
    Backbone::new("test", ProjectionFrontend::new(12), enc).unwrap()
}

fn small_config(classes: usize) -> ProbeConfig {
    ProbeConfig {
        conv_channels: alloc::vec![8, 8, 16],
        head_hidden: alloc::vec![16],
        lora_rank: 4,
        seed: 1,
        ..ProbeConfig::new(4, 8, classes)
    }
}

fn wave(seed: u64, n: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect()
}

fn random_stack(rng: &mut ChaCha8Rng, layers: usize, t: usize, d: usize) -> LayerStack {
    let ls = (0..layers)
        .map(|_| Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0)))
        .collect();
    LayerStack::new(ls, 50.0).unwrap()
}

#[test]
fn aggregate_identities_and_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let same = LayerStack::new(alloc::vec![h.clone(); 3], 50.0).unwrap();
    let agg = ProbeHead::aggregate(&same, &Array1::from(alloc::vec![0.2, 0.3, 0.5])).unwrap();
    assert!(agg.iter().zip(h.iter()).all(|(a, b)| (a - b).abs() < 1e-12));

    let stack = random_stack(&mut rng, 3, 6, 4);
    let one_hot = ProbeHead::aggregate(&stack, &Array1::from(alloc::vec![0.0, 1.0, 0.0])).unwrap();
    assert_eq!(one_hot, stack.layers[1]);

    let w = [0.2, 0.3, 0.5];
    let agg = ProbeHead::aggregate(&stack, &Array1::from(w.to_vec())).unwrap();
    for t in 0..6 {
        for d in 0..4 {
            let brute: f64 = w.iter().zip(&stack.layers).map(|(wk, l)| wk * l[[t, d]]).sum();
            assert!((agg[[t, d]] - brute).abs() < 1e-12);
        }
    }
    assert!(ProbeHead::aggregate(&stack, &Array1::from(alloc::vec![1.0, 0.0])).is_err());
}

#[test]
fn layer_stack_rejects_ragged_layers() {
    let a = Array2::<f64>::zeros((3, 4));
    let b = Array2::<f64>::zeros((2, 4));
    assert!(LayerStack::new(alloc::vec![a.clone(), b], 50.0).is_err());
    assert!(LayerStack::new(alloc::vec![a], 50.0).is_err());
}

#[test]
fn single_frame_pooling_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = small_config(3);
    let head = ProbeHead::init(&cfg, &mut rng).unwrap();
    let stack = random_stack(&mut rng, 4, 1, 8);
    let mut x = ProbeHead::aggregate(&stack, &head.layer_weights()).unwrap();
    for c in &head.conv {
        x = c.forward(&x).mapv(nn::gelu);
    }
    let last = head.fc.len() - 1;
    for (i, f) in head.fc.iter().enumerate() {
        x = f.forward(&x);
        if i != last {
            x = x.mapv(nn::gelu);
        }
    }
    let logits = head.forward(&stack).unwrap();
    for (a, b) in logits.iter().zip(x.row(0)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn batched_forward_matches_unbatched() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let head = ProbeHead::init(&small_config(4), &mut rng).unwrap();
    let stacks: Vec<_> = [7, 1, 13, 4].iter().map(|&t| random_stack(&mut rng, 4, t, 8)).collect();
    let batched = head.forward_batch(&stacks).unwrap();
    for (s, b) in stacks.iter().zip(&batched) {
        let single = head.forward(s).unwrap();
        for (x, y) in single.iter().zip(b) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn logits_length_follows_class_count() {
    let model = DialectModel::new(small_config(5), backbone(3, 8)).unwrap();
    assert_eq!(model.logits(&wave(1, 1600)).unwrap().len(), 5);
}

#[test]
fn lora_zero_init_preserves_outputs_exactly() {
    let plain = DialectModel::without_lora(small_config(3), backbone(3, 8)).unwrap();
    let adapted = DialectModel::new(small_config(3), backbone(3, 8)).unwrap();
    assert!(adapted.backbone.encoder.has_lora());
    assert_eq!(plain.head, adapted.head);
    let w = wave(4, 3200);
    let a = plain.layer_stack(&w).unwrap();
    let b = adapted.layer_stack(&w).unwrap();
    assert_eq!(a, b);
    assert_eq!(plain.logits(&w).unwrap(), adapted.logits(&w).unwrap());
}

#[test]
fn lora_parameter_count_rank_64_on_768() {
    let mut enc = Encoder::seeded(&EncoderConfig {
        input_dim: 4,
        hidden_dim: 768,
        ffn_dim: 768,
        num_blocks: 1,
        seed: 0,
    });
    enc.apply_lora(64, 64.0, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let state = enc.lora_state();
    assert_eq!(state.len(), 2);
    for n in &state {
        assert_eq!(n.adapter.parameter_count(), 2 * 64 * 768);
        assert_eq!(n.adapter.scale, 1.0);
    }
}

#[test]
fn lora_unknown_target_is_named() {
    let mut b = backbone(3, 8);
    let err = b
        .apply_lora(4, 4.0, Some(&["blocks.7.ffn.fc1".to_string()]), &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    assert_eq!(err, ProbeError::UnknownLoraTarget("blocks.7.ffn.fc1".into()));
    assert!(err.to_string().contains("blocks.7.ffn.fc1"));
}

#[test]
fn sgd_step_moves_adapters_not_base_weights() {
    let mut model = DialectModel::new(small_config(3), backbone(3, 8)).unwrap();
    let base_before: Vec<Vec<f64>> = model.backbone.encoder.base_parameters().iter().map(|s| s.to_vec()).collect();
    let lora_before = model.backbone.encoder.lora_state();
    let (_, grads) = model.loss_and_grads(&wave(6, 3200), 1).unwrap();
    let gs: Vec<Vec<f64>> = grads.params().into_iter().map(|(_, g)| g.to_vec()).collect();
    for ((_, p), g) in model.params_mut().into_iter().zip(&gs) {
        for (x, d) in p.iter_mut().zip(g) {
            *x -= 0.1 * d;
        }
    }
    let base_after: Vec<Vec<f64>> = model.backbone.encoder.base_parameters().iter().map(|s| s.to_vec()).collect();
    assert_eq!(base_before, base_after);
    assert_ne!(lora_before, model.backbone.encoder.lora_state());
}

#[test]
fn predictions_normalised_rigged_and_deterministic() {
    let mut model = DialectModel::new(small_config(4), backbone(3, 8)).unwrap();
    let w = wave(7, 4000);
    let p = model.predict_proba("u", &w).unwrap();
    assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    assert!(p.probabilities.iter().all(|&x| x >= 0.0));
    assert_eq!(p, model.predict_proba("u", &w).unwrap());

    model.head.fc.last_mut().unwrap().bias[2] = 100.0;
    let p = model.predict_proba("u", &w).unwrap();
    assert_eq!(p.label, 2);
    assert_eq!(p.max_probability, p.probabilities[2]);
}

#[test]
fn short_and_uninitialized_inputs_fail() {
    let model = DialectModel::new(small_config(3), backbone(3, 8)).unwrap();
    assert!(matches!(model.logits(&wave(0, 100)), Err(ProbeError::TooShort { .. })));
    let mut empty = model.head.clone();
    empty.fc.clear();
    let stack = model.layer_stack(&wave(0, 800)).unwrap();
    assert_eq!(empty.forward(&stack), Err(ProbeError::Uninitialized));
    assert!(DialectModel::new(small_config(3), backbone(5, 8)).is_err());
    assert!(DialectModel::new(small_config(3), backbone(2, 8)).is_err());
}

#[test]
fn layer_weights_stay_on_the_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut head = ProbeHead::init(&small_config(3), &mut rng).unwrap();
    for _ in 0..20 {
        head.layer_logits.mapv_inplace(|v| v + rng.random_range(-3.0..3.0));
        let w = head.layer_weights();
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }
    let mut cfg = small_config(3);
    cfg.layer_weighting = LayerWeighting::Unconstrained;
    let free = ProbeHead::init(&cfg, &mut rng).unwrap();
    assert!((free.layer_weights().sum() - 1.0).abs() < 1e-12);
}

fn gradient_check(cfg: ProbeConfig) {
    let mut model = DialectModel::new(cfg, backbone(3, 8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // Move B off zero so the A gradients are not trivially zero.
    for b in &mut model.backbone.encoder.blocks {
        for a in [&mut b.lora1, &mut b.lora2].into_iter().flatten() {
            a.b.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
    }
    model.head.layer_logits.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    let w = wave(9, 2400);
    let label = 1;
    let (_, grads) = model.loss_and_grads(&w, label).unwrap();
    let analytic: Vec<(ParamGroup, Vec<f64>)> = grads.params().into_iter().map(|(g, s)| (g, s.to_vec())).collect();
    for group in [ParamGroup::LayerWeights, ParamGroup::Conv, ParamGroup::Head, ParamGroup::Lora] {
        let tensors: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i].0 == group).collect();
        for _ in 0..10 {
            let ti = tensors[rng.random_range(0..tensors.len())];
            let j = rng.random_range(0..analytic[ti].1.len());
            let h = 1e-5;
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                m.params_mut()[ti].1[j] += delta;
                m.loss_and_grads(&w, label).unwrap().0
            };
            let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let an = analytic[ti].1[j];
            let denom = fd.abs().max(an.abs());
            let rel = if denom < 1e-9 { 0.0 } else { (fd - an).abs() / denom };
            assert!(rel < 1e-3, "{group:?} tensor {ti} index {j}: analytic {an} numeric {fd}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(small_config(3));
}

#[test]
fn gradients_match_finite_differences_unconstrained() {
    let mut cfg = small_config(3);
    cfg.layer_weighting = LayerWeighting::Unconstrained;
    gradient_check(cfg);
}

#[test]
fn state_round_trip() {
    let mut a = DialectModel::new(small_config(3), backbone(3, 8)).unwrap();
    a.head.layer_logits[0] = 0.7;
    let st = a.state();
    let mut b = DialectModel::new(ProbeConfig { seed: 77, ..small_config(3) }, backbone(3, 8)).unwrap();
    assert_ne!(b.state(), st);
    b.load_state(&st).unwrap();
    assert_eq!(b.state(), st);
    let w = wave(3, 1600);
    assert_eq!(a.logits(&w).unwrap(), b.logits(&w).unwrap());
}
