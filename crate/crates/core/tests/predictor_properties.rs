use maneuver_core::predictor::{mnn_train_windows, MnnParams, MnnTrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wiggly_windows(n: usize, len: usize, seed: u64) -> Vec<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (mut x, mut y) = (rng.gen_range(0.0..60.0), rng.gen_range(0.0..500.0));
            let v = rng.gen_range(1.0..5.0);
            (0..len)
                .map(|_| {
                    x += rng.gen_range(-0.3..0.3);
                    y += v + rng.gen_range(-0.2..0.2);
                    (x, y)
                })
                .collect()
        })
        .collect()
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let params = MnnParams::<f64>::init(5, 1.5, 11);
    let windows = wiggly_windows(3, 12, 5);
    let refs: Vec<&[(f64, f64)]> = windows.iter().map(Vec::as_slice).collect();
    let (_, grad) = params.loss_and_grad(&refs);
    let theta = params.trainable();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut p = params.clone();
        let mut t = theta.clone();
        t[i] += eps;
        p.set_trainable(&t);
        let up = p.loss_and_grad(&refs).0;
        t[i] -= 2.0 * eps;
        p.set_trainable(&t);
        let down = p.loss_and_grad(&refs).0;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        assert!(rel < 1e-4, "param {i}: analytic {} numeric {numeric}", grad[i]);
    }
    assert!(worst < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rollout_is_translation_equivariant(
        seed in any::<u64>(),
        a in -200.0..200.0f64,
        b in -2000.0..2000.0f64,
    ) {
        let params = MnnParams::<f64>::init(8, 2.0, seed);
        let hist = &wiggly_windows(1, 30, seed)[0];
        let moved: Vec<(f64, f64)> = hist.iter().map(|&(x, y)| (x + a, y + b)).collect();
        let p1 = params.rollout(hist, 30).unwrap();
        let p2 = params.rollout(&moved, 30).unwrap();
        for (u, v) in p1.positions.iter().zip(&p2.positions) {
            prop_assert!((v.0 - u.0 - a).abs() < 1e-9);
            prop_assert!((v.1 - u.1 - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shorter_rollout_is_a_prefix(seed in any::<u64>(), k in 1usize..40) {
        let params = MnnParams::<f64>::init(6, 1.0, seed);
        let hist = &wiggly_windows(1, 30, seed ^ 1)[0];
        let short = params.rollout(hist, k).unwrap();
        let long = params.rollout(hist, k + 1).unwrap();
        prop_assert_eq!(short.positions.len(), k);
        prop_assert_eq!(long.positions.len(), k + 1);
        prop_assert_eq!(&long.positions[..k], &short.positions[..]);
    }
}

#[test]
fn constant_velocity_is_learned() {
    let window: Vec<(f64, f64)> = (0..31).map(|i| (18.0, 2.0 * i as f64)).collect();
    let cfg = MnnTrainConfig { epochs: 400, batch_size: 1, ..MnnTrainConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = mnn_train_windows(&[window.clone()], &cfg, &mut rng).unwrap();
    let (loss, _) = out.params.loss_and_grad(&[window.as_slice()]);
    assert!(loss < 0.01, "final one-step RMSE {loss}");
}

#[test]
fn identical_seeds_give_identical_params() {
    let windows = wiggly_windows(10, 31, 2);
    let cfg = MnnTrainConfig { epochs: 3, hidden: 6, ..MnnTrainConfig::default() };
    let a = mnn_train_windows(&windows, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = mnn_train_windows(&windows, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.epoch_loss, b.epoch_loss);
}

#[test]
fn error_grows_with_horizon_on_sinusoid() {
    // Lateral sinusoid with longitudinal drift; windows of 31 positions
    // for training, and 30-history / 30-future splits for evaluation.
    let track: Vec<(f64, f64)> = (0..400)
        .map(|i| {
            let t = i as f64 * 0.1;
            (18.0 + 4.0 * (0.6 * t).sin(), 3.0 * i as f64)
        })
        .collect();
    let windows: Vec<Vec<(f64, f64)>> =
        (0..=track.len() - 31).step_by(5).map(|s| track[s..s + 31].to_vec()).collect();
    let cfg = MnnTrainConfig { hidden: 24, epochs: 200, ..MnnTrainConfig::default() };
    let out = mnn_train_windows(&windows, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let (mut se10, mut se30, mut n) = (0.0, 0.0, 0);
    for s in (0..track.len() - 60).step_by(7) {
        let pred = out.params.rollout(&track[s..s + 30], 30).unwrap();
        let err = |k: usize| {
            let (p, t) = (pred.positions[k - 1], track[s + 29 + k]);
            (p.0 - t.0).powi(2) + (p.1 - t.1).powi(2)
        };
        se10 += err(10);
        se30 += err(30);
        n += 1;
    }
    let (r10, r30) = ((se10 / n as f64).sqrt(), (se30 / n as f64).sqrt());
    assert!(r10 < r30, "horizon 10 RMSE {r10} vs horizon 30 RMSE {r30}");
}
