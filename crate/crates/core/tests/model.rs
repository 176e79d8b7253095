mod common;

use common::{brute_force_assignment, jitter, random, random_tensor, toy_model_config};
use rand::seq::SliceRandom;
use rand::Rng;
use vvids::data::{generate_synthetic, SyntheticSpec};
use vvids::model::{
    assignment_cost, compute_loss, hungarian_match, ForwardOutput, LossWeights, Model, ModelConfig, ModelInput,
    Targets,
};
use vvids::numerics::{gradient_check, Graph, Mode, Tensor, DEFAULT_STEP};
use vvids::rng::seeded;
use vvids::run::{prepare, RunConfig, Trainer};

fn toy_inputs(t: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
    (random(&[t, 5], seed), random(&[t, 4], seed + 1), random(&[3, 3], seed + 2))
}

#[test]
fn full_loss_gradient_check() {
    let (model, mut store) = Model::new(toy_model_config(), &mut seeded(3)).unwrap();
    jitter(&mut store, 0.3, 11);
    let (video, audio, query) = toy_inputs(6, 1);
    let targets = Targets::from_annotations(12.0, &[(2.0, 6.0)], &[0, 4, 4, 3, 1, 0]).unwrap();
    let weights = LossWeights::default();
    let f = |g: &mut Graph<'_>, _: &[vvids::Var]| {
        let input = ModelInput { video: &video, audio: &audio, query: &query };
        let out = model.forward(g, &input, &mut Mode::eval())?;
        Ok(compute_loss(g, &out, &targets, &weights)?.total)
    };
    let err = gradient_check(f, store.tensors(), DEFAULT_STEP).unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn forward_shapes_and_eval_determinism() {
    for (t, layers) in [(1, 1), (6, 1), (11, 3), (16, 2)] {
        let cfg = ModelConfig { decoder_layers: layers, ..toy_model_config() };
        let (model, store) = Model::new(cfg.clone(), &mut seeded(t as u64)).unwrap();
        let (video, audio, query) = toy_inputs(t, 7);
        let input = ModelInput { video: &video, audio: &audio, query: &query };
        let (sal, moments) = model.predict(&store, &input).unwrap();
        assert_eq!(sal.0.len(), t);
        assert_eq!(moments.len(), cfg.num_queries);
        assert!(sal.0.iter().all(|v| v.is_finite()));
        for m in &moments {
            assert!((0.0..=1.0).contains(&m.center) && m.width > 0.0 && m.width <= 1.0);
            assert!((0.0..=1.0).contains(&m.confidence));
            let (s, e) = m.normalized_span();
            assert!(e > s);
        }
        let again = model.predict(&store, &input).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&sal.0), bits(&again.0.0));
        assert_eq!(moments, again.1);
    }
}

#[test]
fn unsynchronized_streams_are_rejected() {
    let (model, store) = Model::new(toy_model_config(), &mut seeded(0)).unwrap();
    let (video, _, query) = toy_inputs(6, 1);
    let audio = random(&[5, 4], 9);
    let r = model.predict(&store, &ModelInput { video: &video, audio: &audio, query: &query });
    assert!(matches!(r, Err(vvids::Error::Sync(_))));
}

#[test]
fn hungarian_examples() {
    let c = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
    let p = hungarian_match(&c).unwrap();
    assert_eq!(p, vec![(0, 0), (1, 1)]);
    assert_eq!(assignment_cost(&c, &p), 2.0);
    let c = Tensor::matrix(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
    let p = hungarian_match(&c).unwrap();
    assert_eq!(p, vec![(1, 0), (0, 1)]);
    assert_eq!(assignment_cost(&c, &p), 2.0);
    let bad = Tensor::matrix(2, 1, vec![1.0, f64::INFINITY]).unwrap();
    assert!(matches!(hungarian_match(&bad), Err(vvids::Error::Numeric(_))));
}

fn check_assignment(cost: &Tensor) {
    let (r, c) = (cost.shape()[0], cost.shape()[1]);
    let pairs = hungarian_match(cost).unwrap();
    assert_eq!(pairs.len(), r.min(c));
    let mut qs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut gs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    qs.sort();
    qs.dedup();
    gs.sort();
    gs.dedup();
    assert_eq!((qs.len(), gs.len()), (pairs.len(), pairs.len()), "assignment must be injective");
    let want = brute_force_assignment(cost);
    let got = assignment_cost(cost, &pairs);
    assert!((got - want).abs() < 1e-9, "{r}x{c}: got {got}, brute force {want}");
}

#[test]
fn hungarian_equals_brute_force_on_random_matrices() {
    let mut rng = seeded(17);
    for case in 0..300 {
        let (r, c) = loop {
            let r = rng.random_range(1..10);
            let c = rng.random_range(1..10);
            if r.min(c) <= 7 {
                break (r, c);
            }
        };
        let mut cost = random_tensor(&[r, c], &mut rng);
        if case % 3 == 0 {
            // integer costs force many ties
            cost.data_mut().iter_mut().for_each(|v| *v = (v.abs() * 2.0).round());
        }
        check_assignment(&cost);
    }
    for seed in 0..20 {
        check_assignment(&random(&[6, 6], 1000 + seed));
    }
}

fn constant_output(g: &mut Graph<'_>, centers: &[f64], widths: &[f64], conf: &[f64], sal: &[f64]) -> ForwardOutput {
    let mut c = |v: &[f64]| g.constant(Tensor::vector(v.to_vec()).unwrap()).unwrap();
    ForwardOutput { centers: c(centers), widths: c(widths), confidence_logits: c(conf), saliency: c(sal) }
}

#[test]
fn idealized_prediction_has_zero_loss() {
    let targets = Targets::from_annotations(20.0, &[(4.0, 10.0)], &[0, 4, 4, 1]).unwrap();
    let (tc, tw) = targets.moments[0];
    let mut g = Graph::new(&[]);
    let out = constant_output(&mut g, &[0.9, tc], &[0.1, tw], &[-40.0, 40.0], &[-40.0, 40.0, 40.0, -40.0]);
    let loss = compute_loss(&mut g, &out, &targets, &LossWeights::default()).unwrap();
    assert_eq!(loss.matches, vec![(1, 0)]);
    assert!(loss.l1.abs() < 1e-12 && loss.giou.abs() < 1e-12);
    assert!(loss.cls <= 1e-6 && loss.saliency <= 1e-6);
    assert!(loss.total_value >= 0.0 && loss.total_value <= 1e-6);
}

#[test]
fn no_ground_truth_leaves_confidence_and_saliency_terms() {
    let targets = Targets::from_annotations(20.0, &[], &[0, 4, 1]).unwrap();
    let mut g = Graph::new(&[]);
    let out = constant_output(&mut g, &[0.5, 0.2], &[0.3, 0.1], &[0.3, -1.0], &[0.5, 1.0, -2.0]);
    let loss = compute_loss(&mut g, &out, &targets, &LossWeights::default()).unwrap();
    assert!(loss.matches.is_empty());
    assert_eq!((loss.l1, loss.giou), (0.0, 0.0));
    assert!((loss.total_value - (loss.cls + loss.saliency)).abs() < 1e-12);
    let softplus = |z: f64| (1.0 + z.exp()).ln();
    assert!((loss.cls - (softplus(0.3) + softplus(-1.0)) / 2.0).abs() < 1e-12);
}

#[test]
fn missing_clips_is_data_error() {
    let targets = Targets { moments: vec![(0.5, 0.2)], saliency: Vec::new() };
    let mut g = Graph::new(&[]);
    let out = constant_output(&mut g, &[0.5], &[0.2], &[0.0], &[0.0]);
    let r = compute_loss(&mut g, &out, &targets, &LossWeights::default());
    assert!(matches!(r, Err(vvids::Error::Data(_))));
}

#[test]
fn loss_is_non_negative_and_invariant_to_ground_truth_order() {
    let cfg = ModelConfig { num_queries: 4, ..toy_model_config() };
    let mut rng = seeded(23);
    for seed in 0..20 {
        let (model, mut store) = Model::new(cfg.clone(), &mut seeded(seed)).unwrap();
        jitter(&mut store, 0.5, seed);
        let (video, audio, query) = toy_inputs(10, seed);
        let input = ModelInput { video: &video, audio: &audio, query: &query };
        let mut spans: Vec<(f64, f64)> = (0..rng.random_range(1..4))
            .map(|_| {
                let s = rng.random_range(0.0..15.0);
                (s, s + rng.random_range(1.0..5.0))
            })
            .collect();
        let ratings: Vec<u8> = (0..10).map(|_| rng.random_range(0..5)).collect();
        let mut totals = Vec::new();
        for _ in 0..4 {
            spans.shuffle(&mut rng);
            let targets = Targets::from_annotations(20.0, &spans, &ratings).unwrap();
            let mut g = Graph::new(store.tensors());
            let out = model.forward(&mut g, &input, &mut Mode::eval()).unwrap();
            let loss = compute_loss(&mut g, &out, &targets, &LossWeights::default()).unwrap();
            assert!(loss.total_value >= 0.0);
            totals.push(loss.total_value);
        }
        for t in &totals[1..] {
            assert!((t - totals[0]).abs() < 1e-9, "{totals:?}");
        }
    }
}

#[test]
fn one_optimizer_step_reduces_loss_on_planted_batch() {
    let spec = SyntheticSpec { n_videos: 8, clips: 12, d_video: 8, d_audio: 6, d_text: 5, ..SyntheticSpec::default() };
    let mut decreased = 0;
    for seed in 0..20 {
        let records = generate_synthetic(&SyntheticSpec { seed, ..spec.clone() }).unwrap();
        let samples = prepare(&records).unwrap();
        let mut cfg = RunConfig::default();
        cfg.model = ModelConfig { d_video: 8, d_audio: 6, d_text: 5, d_model: 32, num_heads: 4, memory_slots: 4, ..cfg.model };
        cfg.seed = seed;
        let mut trainer = Trainer::new(&cfg).unwrap();
        let before = trainer.eval_loss(&samples).unwrap();
        let batch: Vec<_> = samples.iter().collect();
        trainer.train_step(&batch).unwrap();
        let after = trainer.eval_loss(&samples).unwrap();
        if after < before {
            decreased += 1;
        }
    }
    assert!(decreased >= 18, "loss decreased in only {decreased} of 20 seeds");
}
