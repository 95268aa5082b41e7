//! Meta-action to control mapping and the discrete unicycle model.
//!
//! Heading `phi` is measured from the direction of travel (+y) towards
//! +x, so a left maneuver (towards lower lane numbers) has negative `dphi`.

use crate::action::{Lateral, Longitudinal, MetaAction};
use crate::scalar::Scalar;

/// Simulation step, seconds.
pub const DT: f64 = 0.1;

/// Control change for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDelta<T> {
    /// Feet per second, per step.
    pub dv: T,
    /// Radians per step.
    pub dphi: T,
}

/// Per-action control magnitudes. Lateral entries are the absolute yaw
/// change; longitudinal entries are signed speed changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTable<T> {
    pub dphi_hard: T,
    pub dphi_soft: T,
    pub dv_accelerate: T,
    pub dv_cruise: T,
    pub dv_decelerate: T,
    pub dv_brake: T,
}

impl<T: Scalar> Default for ControlTable<T> {
    fn default() -> Self {
        Self {
            dphi_hard: T::lit(0.04),
            dphi_soft: T::lit(0.01),
            dv_accelerate: T::lit(0.5),
            dv_cruise: T::zero(),
            dv_decelerate: T::lit(-0.5),
            dv_brake: T::lit(-1.5),
        }
    }
}

impl<T: Scalar> ControlTable<T> {
    /// Largest yaw change any entry may request.
    pub const MAX_DPHI: f64 = 0.1;

    pub fn validate(&self) -> Result<(), String> {
        let vals = [
            self.dphi_hard,
            self.dphi_soft,
            self.dv_accelerate,
            self.dv_cruise,
            self.dv_decelerate,
            self.dv_brake,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("control table entries must be finite".into());
        }
        for d in [self.dphi_hard, self.dphi_soft] {
            if d.abs() > T::lit(Self::MAX_DPHI) {
                return Err(format!("|dphi| {:?} exceeds {}", d, Self::MAX_DPHI));
            }
        }
        Ok(())
    }

    pub fn control(&self, a: MetaAction) -> ControlDelta<T> {
        let dphi = match a.lateral {
            Lateral::HardLeft => -self.dphi_hard,
            Lateral::SoftLeft => -self.dphi_soft,
            Lateral::SameLane => T::zero(),
            Lateral::SoftRight => self.dphi_soft,
            Lateral::HardRight => self.dphi_hard,
        };
        let dv = match a.longitudinal {
            Longitudinal::Accelerate => self.dv_accelerate,
            Longitudinal::Cruise => self.dv_cruise,
            Longitudinal::Decelerate => self.dv_decelerate,
            Longitudinal::Brake => self.dv_brake,
        };
        ControlDelta { dv, dphi }
    }
}

/// Control for `a` under the default table.
pub fn action_to_control<T: Scalar>(a: MetaAction) -> ControlDelta<T> {
    ControlTable::default().control(a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState<T> {
    pub x: T,
    pub y: T,
    /// Feet per second, never negative.
    pub v: T,
    /// Radians; 0 is straight along +y.
    pub phi: T,
}

/// Speed and heading from two consecutive positions.
pub fn estimate_state<T: Scalar>(prev: (T, T), cur: (T, T), dt: T) -> EgoState<T> {
    let dx = cur.0 - prev.0;
    let dy = cur.1 - prev.1;
    let vx = dx / dt;
    let vy = dy / dt;
    let phi = if dx == T::zero() && dy == T::zero() {
        T::zero()
    } else {
        dx.atan2(dy)
    };
    EgoState {
        x: cur.0,
        y: cur.1,
        v: (vx * vx + vy * vy).sqrt(),
        phi,
    }
}

/// One step: update speed (clamped at zero) and heading first, then
/// advance the position with the updated values.
pub fn step_unicycle<T: Scalar>(s: EgoState<T>, u: ControlDelta<T>, dt: T) -> EgoState<T> {
    let v = (s.v + u.dv).max(T::zero());
    let phi = s.phi + u.dphi;
    EgoState {
        x: s.x + v * phi.sin() * dt,
        y: s.y + v * phi.cos() * dt,
        v,
        phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(lat: Lateral, lon: Longitudinal) -> MetaAction {
        MetaAction::new(lat, lon)
    }

    #[test]
    fn control_table_entries() {
        let c = action_to_control::<f64>(MetaAction::IDLE);
        assert_eq!((c.dv, c.dphi), (0.0, 0.0));
        let c = action_to_control::<f64>(act(Lateral::SoftLeft, Longitudinal::Accelerate));
        assert_eq!((c.dv, c.dphi), (0.5, -0.01));
        let c = action_to_control::<f64>(act(Lateral::HardRight, Longitudinal::Brake));
        assert_eq!((c.dv, c.dphi), (-1.5, 0.04));
    }

    #[test]
    fn table_validation() {
        let mut t = ControlTable::<f64>::default();
        assert!(t.validate().is_ok());
        t.dphi_hard = 0.2;
        assert!(t.validate().is_err());
    }

    #[test]
    fn state_estimates() {
        let s = estimate_state((0.0, 0.0), (0.0, 1.5), 0.1f64);
        assert!((s.v - 15.0).abs() < 1e-12);
        assert_eq!(s.phi, 0.0);
        let s = estimate_state((2.0, 3.0), (2.0, 3.0), 0.1f64);
        assert_eq!((s.v, s.phi), (0.0, 0.0));
        let s = estimate_state((0.0, 0.0), (1.5, 0.0), 0.1f64);
        assert!((s.v - 15.0).abs() < 1e-12);
        assert!((s.phi - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn unicycle_steps() {
        let s = EgoState { x: 1.0, y: 2.0, v: 15.0, phi: 0.0 };
        let n = step_unicycle(s, ControlDelta { dv: 0.0, dphi: 0.0 }, 0.1f64);
        assert_eq!(n.x, 1.0);
        assert!((n.y - 3.5).abs() < 1e-12);

        let s0 = EgoState { x: 0.0, y: 0.0, v: 15.0, phi: 0.0 };
        let n = step_unicycle(s0, ControlDelta { dv: 0.5, dphi: 0.01 }, 0.1f64);
        assert!((n.x - 0.015500).abs() < 1e-6);
        assert!((n.y - 1.549923).abs() < 1e-6);

        let slow = EgoState { x: 4.0, y: 5.0, v: 1.0, phi: 0.3 };
        let n = step_unicycle(slow, ControlDelta { dv: -1.5, dphi: 0.0 }, 0.1f64);
        assert_eq!((n.x, n.y, n.v), (4.0, 5.0, 0.0));
    }

    #[test]
    fn f32_unicycle() {
        let s = EgoState { x: 0.0f32, y: 0.0, v: 15.0, phi: 0.0 };
        let n = step_unicycle(s, ControlDelta { dv: 0.0, dphi: 0.0 }, 0.1);
        assert!((n.y - 1.5).abs() < 1e-6);
    }
}
