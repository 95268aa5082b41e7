use maneuver_core::data::LaneConfig;
use maneuver_core::grid::{build_grid, occupancy_probability, GridSpec, LanePos, NeighborInput};
use maneuver_core::predictor::PredictionResult;
use proptest::prelude::*;

const ROWS: usize = 13;
const COLS: usize = 3;

/// Independent rasterizer: cell of `other` relative to `ego`, by explicit
/// interval search over the 13 row bands instead of rounding.
fn brute_cell(ego: LanePos, other: LanePos) -> Option<(usize, usize)> {
    let dl = other.lane - ego.lane;
    if !(-1..=1).contains(&dl) {
        return None;
    }
    let dy = other.y - ego.y;
    for row in 0..ROWS {
        let centre = (6.0 - row as f64) * 15.0;
        let (lo, hi) = (centre - 7.5, centre + 7.5);
        // Ties at the half cell go away from zero, like `f64::round`.
        let inside = if centre > 0.0 {
            dy >= lo && dy < hi
        } else if centre < 0.0 {
            dy > lo && dy <= hi
        } else {
            dy > lo && dy < hi
        };
        if inside {
            return Some((row, (dl + 1) as usize));
        }
    }
    None
}

fn quantise(v: f64) -> f64 {
    (v * 8.0).round() / 8.0
}

#[derive(Debug, Clone)]
struct Scene {
    ego: Vec<LanePos>,
    neighbors: Vec<NeighborInput>,
}

fn scene_strategy() -> impl Strategy<Value = Scene> {
    let ego = (0.0..1000.0f64, 1i64..=5, 0.0..6.0f64);
    let nb = (
        -120.0..120.0f64,
        -2i64..=2,
        -3.0..3.0f64,
        prop::collection::vec(any::<bool>(), 30),
        -3.0..3.0f64,
    );
    (ego, prop::collection::vec(nb, 0..6)).prop_map(|((y0, lane, speed), nbs)| {
        let ego: Vec<LanePos> = (0..30)
            .map(|k| LanePos { y: quantise(y0 + speed * k as f64), lane })
            .collect();
        let lanes = LaneConfig::default();
        let neighbors = nbs
            .into_iter()
            .enumerate()
            .map(|(i, (dy, dl, rel, present, fut))| {
                let nlane = (lane + dl).clamp(1, 5);
                let history: Vec<Option<LanePos>> = (0..30)
                    .map(|k| {
                        present[k].then(|| LanePos {
                            y: quantise(ego[k].y + dy + rel * (k as f64 - 29.0)),
                            lane: nlane,
                        })
                    })
                    .collect();
                let last_y = quantise(ego[29].y + dy);
                let x = lanes.lane_center(nlane as u32);
                let positions = (1..=30).map(|k| (x, quantise(last_y + fut * k as f64))).collect();
                NeighborInput {
                    vehicle_id: i as u32 + 1,
                    history,
                    prediction: Some(PredictionResult { positions }),
                }
            })
            .collect();
        Scene { ego, neighbors }
    })
}

fn shift(scene: &Scene, b: f64) -> Scene {
    Scene {
        ego: scene.ego.iter().map(|p| LanePos { y: p.y + b, ..*p }).collect(),
        neighbors: scene
            .neighbors
            .iter()
            .map(|n| NeighborInput {
                vehicle_id: n.vehicle_id,
                history: n
                    .history
                    .iter()
                    .map(|p| p.map(|p| LanePos { y: p.y + b, ..p }))
                    .collect(),
                prediction: n.prediction.as_ref().map(|pr| PredictionResult {
                    positions: pr.positions.iter().map(|&(x, y)| (x, y + b)).collect(),
                }),
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn past_channels_match_brute_force(scene in scene_strategy()) {
        let spec = GridSpec::default();
        let g = build_grid(&spec, &LaneConfig::default(), &scene.ego, &scene.neighbors).unwrap();
        for c in 0..30 {
            let mut want = [[0.0; COLS]; ROWS];
            for nb in &scene.neighbors {
                if let Some(p) = nb.history[c] {
                    if let Some((r, col)) = brute_cell(scene.ego[c], p) {
                        want[r][col] = 1.0;
                    }
                }
            }
            for (r, row) in want.iter().enumerate() {
                for (col, &w) in row.iter().enumerate() {
                    prop_assert_eq!(g.get(r, col, c), w, "channel {} cell ({}, {})", c, r, col);
                }
            }
        }
        prop_assert!(g.check_invariants());
    }

    #[test]
    fn invariant_under_longitudinal_translation(scene in scene_strategy(), b in -400i32..400) {
        let spec = GridSpec::default();
        let lanes = LaneConfig::default();
        let b = f64::from(b) * 0.25;
        let g1 = build_grid(&spec, &lanes, &scene.ego, &scene.neighbors).unwrap();
        let moved = shift(&scene, b);
        let g2 = build_grid(&spec, &lanes, &moved.ego, &moved.neighbors).unwrap();
        prop_assert_eq!(g1.values(), g2.values());
    }

    #[test]
    fn single_vehicle_mass_is_conserved(row in 1usize..12, dl in -1i64..=1, k in 1usize..=30) {
        // A lone prediction whose 3x3 neighbourhood is inside the grid
        // horizontally only when it sits in the centre column.
        let spec = GridSpec::default();
        let lanes = LaneConfig::default();
        let ego: Vec<LanePos> = (0..30).map(|_| LanePos { y: 500.0, lane: 3 }).collect();
        let y = 500.0 + (6.0 - row as f64) * 15.0;
        let x = lanes.lane_center((3 + dl) as u32);
        let nb = NeighborInput {
            vehicle_id: 1,
            history: vec![None; 30],
            prediction: Some(PredictionResult { positions: vec![(x, y); 30] }),
        };
        let g = build_grid(&spec, &lanes, &ego, &[nb]).unwrap();
        let mass: f64 = g.channel(30 + k - 1).iter().sum();
        let p = occupancy_probability(k as f64).unwrap();
        if dl == 0 {
            prop_assert!((mass - 1.0).abs() < 1e-12);
        } else {
            // Three of the eight side cells fall off the grid.
            prop_assert!((mass - (p + 5.0 * (1.0 - p) / 8.0)).abs() < 1e-12);
        }
        prop_assert!((g.get(row, (dl + 1) as usize, 30 + k - 1) - p).abs() < 1e-15);
    }
}

#[test]
fn centre_probability_decays_for_stationary_prediction() {
    let spec = GridSpec::default();
    let lanes = LaneConfig::default();
    let ego: Vec<LanePos> = (0..30).map(|_| LanePos { y: 0.0, lane: 2 }).collect();
    let nb = NeighborInput {
        vehicle_id: 4,
        history: vec![Some(LanePos { y: 45.0, lane: 2 }); 30],
        prediction: Some(PredictionResult { positions: vec![(lanes.lane_center(2), 45.0); 30] }),
    };
    let g = build_grid(&spec, &lanes, &ego, &[nb]).unwrap();
    let mut prev = f64::INFINITY;
    for c in 30..60 {
        let v = g.get(3, 1, c);
        assert!(v <= prev);
        prev = v;
    }
}

#[test]
fn overlapping_predictions_take_cell_maximum() {
    let spec = GridSpec::default();
    let lanes = LaneConfig::default();
    let ego: Vec<LanePos> = (0..30).map(|_| LanePos { y: 0.0, lane: 3 }).collect();
    let x = lanes.lane_center(3);
    let mk = |id, y| NeighborInput {
        vehicle_id: id,
        history: vec![None; 30],
        prediction: Some(PredictionResult { positions: vec![(x, y); 30] }),
    };
    // Centre of one vehicle lands on a side cell of the other.
    let g = build_grid(&spec, &lanes, &ego, &[mk(1, 30.0), mk(2, 45.0)]).unwrap();
    let p = occupancy_probability(1.0).unwrap();
    assert_eq!(g.get(4, 1, 30), p);
    assert_eq!(g.get(3, 1, 30), p);
    assert!(g.check_invariants());
}
