//! The distance/imitation/off-road reward checked against a literal,
//! line-by-line transcription kept here, independent of the production code.

use maneuver_core::reward::{classify, total_reward, Region, RewardConfig, Scene};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Oracle {
    total: f64,
    r_dis: f64,
    r_imit: f64,
    r_off: f64,
    r_pos: f64,
    r_neg: f64,
    p1: u32,
    p2: u32,
    p3: u32,
    n: u32,
}

fn oracle(pred: (f64, f64), act: (f64, f64), s: &[(f64, f64)], lanes: u32, width: f64) -> Oracle {
    let (c1, c2, k1, k2) = (5.0, 125.0, 2.0, -6.0);
    let l = 15.0;
    let d1 = l + 1.0;
    let d2 = 1.5 * l + 2.5;
    let (mut p1, mut p2, mut p3, mut p_count, mut n_count) = (0u32, 0u32, 0u32, 0u32, 0u32);
    let (mut r_pos, mut r_neg) = (0.0f64, 0.0f64);
    for &(sx, sy) in s {
        let dx = pred.0 - sx;
        let dy = pred.1 - sy;
        let d = (dx * dx + dy * dy).sqrt();
        if dy.abs() <= 0.5 * l {
            if dx.abs() >= 0.5 * l {
                p1 += 1;
                p_count += 1;
                if p1 <= 1 {
                    r_pos += c1 * (dx.abs() - 0.5 * l).tanh();
                }
            } else {
                n_count += 1;
                r_neg += c1 * (dx.abs() - 0.5 * l).tanh();
            }
        } else if d <= d1 && dx.abs() <= 0.5 * l {
            n_count += 1;
            r_neg += c1 * (d - d1).tanh();
        } else if d <= d2 {
            p2 += 1;
            p_count += 1;
            r_pos += d / c1;
        } else {
            p3 += 1;
            p_count += 1;
            r_pos += c2 / d;
        }
    }
    let pos_term = if p_count == 0 { 0.0 } else { r_pos / p_count as f64 };
    let r_dis = pos_term + k1 * r_neg;
    let x_err = pred.0 - act.0;
    let y_err = pred.1 - act.1;
    let r_imit = -0.5 * (0.25 * x_err.abs() + 0.1 * y_err.abs());
    let r_off = if pred.0 <= 0.0 || pred.0 >= lanes as f64 * width { k2 } else { 0.0 };
    Oracle {
        total: r_dis + r_imit + r_off,
        r_dis,
        r_imit,
        r_off,
        r_pos,
        r_neg,
        p1,
        p2,
        p3,
        n: n_count,
    }
}

#[test]
fn agrees_with_oracle_on_random_scenes() {
    let cfg = RewardConfig::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let u = |rng: &mut ChaCha8Rng| rng.gen_range(-120.0..=120.0);
    for _ in 0..10_000 {
        let pred = (rng.gen_range(-10.0..70.0), u(&mut rng));
        let act = (pred.0 + rng.gen_range(-5.0..5.0), pred.1 + rng.gen_range(-5.0..5.0));
        let n = rng.gen_range(0..=8);
        let s: Vec<(f64, f64)> = (0..n)
            .map(|_| (pred.0 + u(&mut rng), pred.1 + u(&mut rng)))
            .collect();
        let got = total_reward(pred, act, &s, &cfg);
        let want = oracle(pred, act, &s, cfg.n_lanes, cfg.lane_width);
        assert!((got.total - want.total).abs() < 1e-9);
        assert!((got.r_dis - want.r_dis).abs() < 1e-9);
        assert!((got.r_imit - want.r_imit).abs() < 1e-9);
        assert_eq!(got.r_offroad, want.r_off);
        assert_eq!((got.p1, got.p2, got.p3, got.n_count), (want.p1, want.p2, want.p3, want.n));
    }
}

#[test]
fn near_scenes_agree_with_oracle() {
    // Dense sampling around the region boundaries, where branch order matters.
    let cfg = RewardConfig::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=4);
        let s: Vec<(f64, f64)> = (0..n)
            .map(|_| (30.0 + rng.gen_range(-20.0..20.0), rng.gen_range(-30.0..30.0)))
            .collect();
        let got = total_reward((30.0, 0.0), (30.0, 0.0), &s, &cfg);
        let want = oracle((30.0, 0.0), (30.0, 0.0), &s, 5, 12.0);
        assert!((got.total - want.total).abs() < 1e-9);
    }
}

#[test]
fn named_scenes() {
    let cfg = RewardConfig::<f64>::default();
    let cases = [
        ("30 100 30 100 1 30 70", 125.0 / 30.0),
        ("30 100 30 100 1 30 90", -9.999877),
        ("30 100 30 100 1 20 95", 4.933069),
        ("-1 100 0 102 1 -1 70", 125.0 / 30.0 - 0.225 - 6.0),
    ];
    for (text, want) in cases {
        let scene: Scene = text.parse().unwrap();
        let r = scene.reward(&cfg);
        assert!((r.total - want).abs() < 1e-5, "{text}: {} vs {want}", r.total);
    }
}

#[test]
fn p2_p3_boundary_is_continuous() {
    let cfg = RewardConfig::<f64>::default();
    assert_eq!(cfg.d2 / cfg.c1, 5.0);
    assert_eq!(cfg.c2 / cfg.d2, 5.0);
    let at = total_reward((0.0, 0.0), (0.0, 0.0), &[(0.0, 25.0)], &cfg);
    assert_eq!(classify(0.0, -25.0, &cfg), Region::P2);
    assert_eq!(at.r_dis, 5.0);
}

fn scene_strategy() -> impl Strategy<Value = ((f64, f64), (f64, f64), Vec<(f64, f64)>)> {
    (
        (-10.0..70.0f64, -120.0..120.0f64),
        (-10.0..70.0f64, -120.0..120.0f64),
        prop::collection::vec((-120.0..120.0f64, -120.0..120.0f64), 0..8),
    )
}

proptest! {
    #[test]
    fn component_bounds((pred, act, s) in scene_strategy()) {
        let cfg = RewardConfig::<f64>::default();
        let s: Vec<_> = s.iter().map(|&(dx, dy)| (pred.0 + dx, pred.1 + dy)).collect();
        let r = total_reward(pred, act, &s, &cfg);
        prop_assert!(r.r_imit <= 0.0);
        prop_assert!(r.r_offroad == 0.0 || r.r_offroad == -6.0);
        prop_assert_eq!(r.p_count, r.p1 + r.p2 + r.p3);
        prop_assert!((r.total - (r.r_dis + r.r_imit + r.r_offroad)).abs() < 1e-12);
        // Negative-only scenes can never score above zero.
        if r.p_count == 0 {
            prop_assert!(r.r_dis <= 0.0);
        }
    }

    #[test]
    fn extra_p3_vehicle_only_moves_positive_mean(
        (pred, act, s) in scene_strategy(),
        angle in 0.0..std::f64::consts::TAU,
        dist in 26.0..100.0f64,
    ) {
        let cfg = RewardConfig::<f64>::default();
        let s: Vec<_> = s.iter().map(|&(dx, dy)| (pred.0 + dx, pred.1 + dy)).collect();
        let extra = (pred.0 + dist * angle.sin(), pred.1 + dist * angle.cos());
        prop_assume!(classify(pred.0 - extra.0, pred.1 - extra.1, &cfg) == Region::P3);
        let before = oracle(pred, act, &s, 5, 12.0);
        let mut s2 = s.clone();
        s2.push(extra);
        let after = total_reward(pred, act, &s2, &cfg);
        let d = (pred.0 - extra.0).hypot(pred.1 - extra.1);
        let pc = f64::from(before.p1 + before.p2 + before.p3);
        let want = (before.r_pos + 125.0 / d) / (pc + 1.0) + 2.0 * before.r_neg;
        let b = total_reward(pred, act, &s, &cfg);
        prop_assert!((after.r_dis - want).abs() < 1e-9);
        prop_assert_eq!(after.r_imit, b.r_imit);
        prop_assert_eq!(after.r_offroad, b.r_offroad);
        prop_assert_eq!(after.n_count, b.n_count);
    }
}
