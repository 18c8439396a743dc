use natrob_core::rng;
use natrob_core::trainer::{
    argmax, loss_and_grad, loss_and_grad_with_adversarial, mean_cross_entropy, pgd_attack, train, MlpModel, PgdParams,
    Sample, Technique, TrainConfig,
};
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, so exactly-zero gradients compare absolutely.
const REL_FLOOR: f64 = 1e-6;

fn random_batch(n: usize, dim: usize, k: usize, seed: u64) -> Vec<Sample> {
    let mut rng = rng::stream(seed);
    (0..n)
        .map(|_| Sample {
            features: (0..dim).map(|_| rng.random_range(0.0..1.0)).collect(),
            label: rng.random_range(0..k),
        })
        .collect()
}

fn config_for(technique: Technique) -> TrainConfig {
    TrainConfig {
        technique,
        lambda: 0.3,
        label_smoothing: if technique == Technique::LabelSmoothing { 0.2 } else { 0.0 },
        pgd: (technique == Technique::AdversarialLogitPairing)
            .then_some(PgdParams { epsilon: 0.1, steps: 3, step_size: 0.04 }),
        ..TrainConfig::default()
    }
}

fn flat(model: &MlpModel) -> Vec<f64> {
    model.params().copied().collect()
}

fn with_param(model: &MlpModel, idx: usize, value: f64) -> MlpModel {
    let mut m = model.clone();
    *m.params_mut().nth(idx).unwrap() = value;
    m
}

#[test]
fn gradients_match_central_differences_for_every_technique() {
    let model = MlpModel::init(&[12, 7, 4], 21).unwrap();
    let data = random_batch(10, 12, 4, 22);
    let batch: Vec<&Sample> = data.iter().collect();
    for technique in Technique::ALL {
        let cfg = config_for(technique);
        // adversarial inputs are held fixed so the objective is a smooth function of the weights
        let adv: Vec<Vec<f64>> = match &cfg.pgd {
            Some(p) => data.iter().map(|s| pgd_attack(&model, &s.features, s.label, p).unwrap()).collect(),
            None => Vec::new(),
        };
        let analytic = loss_and_grad_with_adversarial(&model, &batch, &adv, &cfg).unwrap();
        let g = flat(&analytic.grad);
        let params = flat(&model);
        let mut worst = 0.0f64;
        for (i, &p) in params.iter().enumerate() {
            let up = loss_and_grad_with_adversarial(&with_param(&model, i, p + H), &batch, &adv, &cfg).unwrap().loss;
            let down = loss_and_grad_with_adversarial(&with_param(&model, i, p - H), &batch, &adv, &cfg).unwrap().loss;
            let numeric = (up - down) / (2.0 * H);
            let rel = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
        assert!(worst <= REL_TOL, "{technique}: worst relative error {worst:e}");
    }
}

#[test]
fn adversarial_pairing_with_generated_inputs_matches_fixed_inputs() {
    let model = MlpModel::init(&[12, 7, 4], 3).unwrap();
    let data = random_batch(6, 12, 4, 4);
    let batch: Vec<&Sample> = data.iter().collect();
    let cfg = config_for(Technique::AdversarialLogitPairing);
    let p = cfg.pgd.unwrap();
    let adv: Vec<Vec<f64>> = data.iter().map(|s| pgd_attack(&model, &s.features, s.label, &p).unwrap()).collect();
    let a = loss_and_grad(&model, &batch, &cfg).unwrap();
    let b = loss_and_grad_with_adversarial(&model, &batch, &adv, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pgd_loss_non_decreasing_over_epsilon_grid() {
    let model = MlpModel::init(&[12, 7, 4], 31).unwrap();
    let data = random_batch(20, 12, 4, 32);
    let grid = [0.0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32];
    let batch_ce = |eps: f64| {
        let p = PgdParams { epsilon: eps, steps: 1, step_size: eps };
        let adv: Vec<Sample> = data
            .iter()
            .map(|s| Sample { features: pgd_attack(&model, &s.features, s.label, &p).unwrap(), label: s.label })
            .collect();
        mean_cross_entropy(&model, &adv.iter().collect::<Vec<_>>()).unwrap()
    };
    let ces: Vec<f64> = grid.iter().map(|&e| batch_ce(e)).collect();
    assert!(ces.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{ces:?}");
}

#[test]
fn sigmoid_training_predicts_by_argmax() {
    let data = random_batch(40, 6, 3, 41);
    let init = MlpModel::init(&[6, 5, 3], 42).unwrap();
    let cfg = TrainConfig { technique: Technique::SigmoidMulticlass, epochs: 3, batch_size: 8, ..Default::default() };
    let model = train(&init, &data, None, &cfg).unwrap().model;
    for s in &data {
        let z = model.forward(&s.features).unwrap();
        let best = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(argmax(&z), z.iter().position(|&v| v == best).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgd_respects_ball(seed in 0u64..1000, eps in 0.0f64..0.5, steps in 0usize..6, label in 0usize..3) {
        let model = MlpModel::init(&[5, 4, 3], seed).unwrap();
        let mut rng = rng::stream(seed ^ 0xabc);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let p = PgdParams { epsilon: eps, steps, step_size: eps / 3.0 };
        let adv = pgd_attack(&model, &x, label, &p).unwrap();
        let dist = adv.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(dist <= eps + 1e-15);
        prop_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn checkpoint_round_trip_bit_exact(seed in 0u64..10_000, hidden in 1usize..9, k in 1usize..6) {
        let m = MlpModel::init(&[4, hidden, k], seed).unwrap();
        let back = MlpModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert!(m.params().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn regularized_loss_dominates_cross_entropy(seed in 0u64..500, lambda in 0.0f64..2.0) {
        let model = MlpModel::init(&[5, 4, 3], seed).unwrap();
        let data = random_batch(6, 5, 3, seed + 1);
        let batch: Vec<&Sample> = data.iter().collect();
        let ce = mean_cross_entropy(&model, &batch).unwrap();
        for t in [Technique::WeightDecay, Technique::CleanLogitPairing, Technique::CleanLogitSqueezing] {
            let r = loss_and_grad(&model, &batch, &TrainConfig { technique: t, lambda, ..Default::default() }).unwrap();
            prop_assert!(r.technique_term >= 0.0);
            prop_assert!(r.loss >= ce - 1e-12);
        }
    }
}
