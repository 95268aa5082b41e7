use maneuver_core::dynamics::{step_unicycle, ControlDelta, ControlTable, EgoState};
use maneuver_core::MetaAction;
use proptest::prelude::*;

proptest! {
    #[test]
    fn zero_control_is_a_straight_line(
        v in 0.0..80.0f64,
        phi in -0.5..0.5f64,
        n in 1usize..200,
    ) {
        let mut s = EgoState { x: 10.0, y: -20.0, v, phi };
        for _ in 0..n {
            let next = step_unicycle(s, ControlDelta { dv: 0.0, dphi: 0.0 }, 0.1);
            let step = (next.x - s.x).hypot(next.y - s.y);
            prop_assert!((step - v * 0.1).abs() < 1e-12);
            prop_assert_eq!(next.v, v);
            prop_assert_eq!(next.phi, phi);
            s = next;
        }
    }

    #[test]
    fn speed_never_negative(
        v in 0.0..60.0f64,
        actions in prop::collection::vec(0usize..MetaAction::COUNT, 1..300),
    ) {
        let table = ControlTable::<f64>::default();
        let mut s = EgoState { x: 30.0, y: 0.0, v, phi: 0.0 };
        for a in actions {
            s = step_unicycle(s, table.control(MetaAction::from_index(a).unwrap()), 0.1);
            prop_assert!(s.v >= 0.0);
        }
    }
}

/// Constant yaw rate at constant speed traces a circle of radius
/// `v dt / dphi` (chord approximation, within 1%).
#[test]
fn constant_yaw_traces_circle() {
    let (v, dphi, dt) = (30.0f64, 0.01f64, 0.1f64);
    let mut s = EgoState { x: 0.0, y: 0.0, v, phi: 0.0 };
    let mut pts = vec![(s.x, s.y)];
    let n = 628;
    for _ in 0..n {
        s = step_unicycle(s, ControlDelta { dv: 0.0, dphi }, dt);
        pts.push((s.x, s.y));
    }
    assert!((s.phi - n as f64 * dphi).abs() < 1e-9);
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let r_expected = v * dt / dphi;
    for &(x, y) in &pts {
        let r = (x - cx).hypot(y - cy);
        assert!((r - r_expected).abs() / r_expected < 0.01, "r = {r}");
    }
}

#[test]
fn f32_and_f64_agree() {
    let table64 = ControlTable::<f64>::default();
    let table32 = ControlTable::<f32>::default();
    let mut a = EgoState { x: 18.0f64, y: 0.0, v: 40.0, phi: 0.0 };
    let mut b = EgoState { x: 18.0f32, y: 0.0, v: 40.0, phi: 0.0 };
    for i in 0..100 {
        let act = MetaAction::from_index((i * 7) % MetaAction::COUNT).unwrap();
        a = step_unicycle(a, table64.control(act), 0.1);
        b = step_unicycle(b, table32.control(act), 0.1);
    }
    assert!((a.y - b.y as f64).abs() < 1e-2);
    assert!((a.x - b.x as f64).abs() < 1e-2);
}
