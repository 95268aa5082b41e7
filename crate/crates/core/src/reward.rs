//! Three-part shaped reward: distance regions around the ego, imitation of
//! the recorded human position, and an off-road penalty.

use std::fmt;
use std::str::FromStr;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig<T> {
    pub c1: T,
    pub c2: T,
    pub k1: T,
    pub k2: T,
    /// Average vehicle length, feet.
    pub l: T,
    /// Near radius `l + 1`, feet.
    pub d1: T,
    /// Far radius `1.5 l + 2.5`, feet.
    pub d2: T,
    pub lane_width: T,
    pub n_lanes: u32,
    pub imit_x_weight: T,
    pub imit_y_weight: T,
    pub imit_scale: T,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        Self::with_length(T::lit(15.0))
    }
}

impl<T: Scalar> RewardConfig<T> {
    /// Defaults with `d1`, `d2` derived from the vehicle length.
    pub fn with_length(l: T) -> Self {
        Self {
            c1: T::lit(5.0),
            c2: T::lit(125.0),
            k1: T::lit(2.0),
            k2: T::lit(-6.0),
            l,
            d1: l + T::one(),
            d2: T::lit(1.5) * l + T::lit(2.5),
            lane_width: T::lit(12.0),
            n_lanes: 5,
            imit_x_weight: T::lit(0.25),
            imit_y_weight: T::lit(0.1),
            imit_scale: T::lit(-0.5),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.l > T::zero()) {
            return Err("vehicle length must be positive".into());
        }
        if !(self.d1 < self.d2) {
            return Err("d1 must be smaller than d2".into());
        }
        if !(self.lane_width > T::zero()) || self.n_lanes == 0 {
            return Err("road must have positive width".into());
        }
        Ok(())
    }

    fn half_l(&self) -> T {
        T::lit(0.5) * self.l
    }
}

/// Region of a surrounding vehicle relative to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Alongside, laterally clear.
    P1,
    /// Within `d2`.
    P2,
    /// Beyond `d2`.
    P3,
    /// Laterally overlapping alongside, or within `d1` in the lateral band.
    Negative,
}

/// Region of a vehicle at offset (`dx` lateral, `dy` longitudinal).
pub fn classify<T: Scalar>(dx: T, dy: T, cfg: &RewardConfig<T>) -> Region {
    let half = cfg.half_l();
    let (ax, ay) = (dx.abs(), dy.abs());
    if ay <= half {
        if ax >= half {
            Region::P1
        } else {
            Region::Negative
        }
    } else {
        let d = (dx * dx + dy * dy).sqrt();
        if d <= cfg.d1 && ax <= half {
            Region::Negative
        } else if d <= cfg.d2 {
            Region::P2
        } else {
            Region::P3
        }
    }
}

/// Near-collision predicate: the vehicle sits in a negative reward region.
pub fn in_negative_region<T: Scalar>(dx: T, dy: T, cfg: &RewardConfig<T>) -> bool {
    classify(dx, dy, cfg) == Region::Negative
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown<T> {
    pub r_dis: T,
    pub r_imit: T,
    pub r_offroad: T,
    pub total: T,
    pub p1: u32,
    pub p2: u32,
    pub p3: u32,
    pub n_count: u32,
    pub p_count: u32,
}

/// Distance term and region counts (total/imitation/off-road left zero).
/// Only the first P1 vehicle in `surrounding` order earns positive reward;
/// an empty positive set contributes zero instead of dividing by zero.
pub fn distance_reward<T: Scalar>(
    ego_pred: (T, T),
    surrounding: &[(T, T)],
    cfg: &RewardConfig<T>,
) -> RewardBreakdown<T> {
    let half = cfg.half_l();
    let mut out = RewardBreakdown::<T>::default();
    let (mut r_pos, mut r_neg) = (T::zero(), T::zero());
    for &(sx, sy) in surrounding {
        let dx = ego_pred.0 - sx;
        let dy = ego_pred.1 - sy;
        let d = (dx * dx + dy * dy).sqrt();
        match classify(dx, dy, cfg) {
            Region::P1 => {
                out.p1 += 1;
                out.p_count += 1;
                if out.p1 <= 1 {
                    r_pos = r_pos + cfg.c1 * (dx.abs() - half).tanh();
                }
            }
            Region::Negative => {
                out.n_count += 1;
                let arg = if dy.abs() <= half { dx.abs() - half } else { d - cfg.d1 };
                r_neg = r_neg + cfg.c1 * arg.tanh();
            }
            Region::P2 => {
                out.p2 += 1;
                out.p_count += 1;
                r_pos = r_pos + d / cfg.c1;
            }
            Region::P3 => {
                out.p3 += 1;
                out.p_count += 1;
                r_pos = r_pos + cfg.c2 / d;
            }
        }
    }
    let pos = if out.p_count > 0 {
        r_pos / T::lit(out.p_count as f64)
    } else {
        T::zero()
    };
    out.r_dis = pos + cfg.k1 * r_neg;
    out.total = out.r_dis;
    out
}

/// Weighted displacement from the recorded human position; never positive.
pub fn imitation_reward<T: Scalar>(ego_pred: (T, T), ego_actual: (T, T), cfg: &RewardConfig<T>) -> T {
    let err = cfg.imit_x_weight * (ego_pred.0 - ego_actual.0).abs()
        + cfg.imit_y_weight * (ego_pred.1 - ego_actual.1).abs();
    cfg.imit_scale * err
}

/// `k2` when the lateral position is on or beyond either road edge.
pub fn offroad_reward<T: Scalar>(ego_pred_x: T, cfg: &RewardConfig<T>) -> T {
    let width = T::lit(cfg.n_lanes as f64) * cfg.lane_width;
    if ego_pred_x <= T::zero() || ego_pred_x >= width {
        cfg.k2
    } else {
        T::zero()
    }
}

pub fn total_reward<T: Scalar>(
    ego_pred: (T, T),
    ego_actual: (T, T),
    surrounding: &[(T, T)],
    cfg: &RewardConfig<T>,
) -> RewardBreakdown<T> {
    let mut out = distance_reward(ego_pred, surrounding, cfg);
    out.r_imit = imitation_reward(ego_pred, ego_actual, cfg);
    out.r_offroad = offroad_reward(ego_pred.0, cfg);
    out.total = out.r_dis + out.r_imit + out.r_offroad;
    out
}

/// One reward scene in the whitespace-separated golden-file format:
/// `pred_x pred_y actual_x actual_y n x1 y1 ... xn yn`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ego_pred: (f64, f64),
    pub ego_actual: (f64, f64),
    pub surrounding: Vec<(f64, f64)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("malformed scene: {0}")]
pub struct SceneParseError(pub String);

impl FromStr for Scene {
    type Err = SceneParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| SceneParseError(format!("bad number `{t}`"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if nums.len() < 5 {
            return Err(SceneParseError("need at least 5 fields".into()));
        }
        let n = nums[4];
        if n < 0.0 || n.fract() != 0.0 {
            return Err(SceneParseError(format!("bad vehicle count {n}")));
        }
        let n = n as usize;
        if nums.len() != 5 + 2 * n {
            return Err(SceneParseError(format!(
                "expected {} fields for {n} vehicles, found {}",
                5 + 2 * n,
                nums.len()
            )));
        }
        Ok(Scene {
            ego_pred: (nums[0], nums[1]),
            ego_actual: (nums[2], nums[3]),
            surrounding: nums[5..].chunks(2).map(|c| (c[0], c[1])).collect(),
        })
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.ego_pred.0,
            self.ego_pred.1,
            self.ego_actual.0,
            self.ego_actual.1,
            self.surrounding.len()
        )?;
        for (x, y) in &self.surrounding {
            write!(f, " {x} {y}")?;
        }
        Ok(())
    }
}

impl Scene {
    pub fn reward(&self, cfg: &RewardConfig<f64>) -> RewardBreakdown<f64> {
        total_reward(self.ego_pred, self.ego_actual, &self.surrounding, cfg)
    }
}
