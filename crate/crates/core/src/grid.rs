//! Context-aware occupancy grid: binary occupancy for the recent past and
//! probabilistic occupancy maps (POMs) for predicted future positions.
//!
//! Rows run longitudinally with the ego in the middle row and cells ahead
//! of the ego at lower row indices; columns are left lane, ego lane,
//! right lane.

use std::fmt::Write as _;

use crate::data::LaneConfig;
use crate::predictor::PredictionResult;
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("time index {0} outside [0, 30]")]
    Domain(f64),
    #[error("invalid grid input: {0}")]
    Input(String),
    #[error("malformed grid dump: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub past: usize,
    pub future: usize,
    /// Longitudinal cell size, feet.
    pub cell_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 13,
            cols: 3,
            past: 30,
            future: 30,
            cell_length: 15.0,
        }
    }
}

impl GridSpec {
    pub fn channels(&self) -> usize {
        self.past + self.future
    }

    pub fn ego_row(&self) -> usize {
        self.rows / 2
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * self.channels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.rows % 2 == 0 || self.cols != 3 || self.past == 0 || self.cell_length <= 0.0 {
            return Err(GridError::Input(format!("unsupported grid spec {self:?}")));
        }
        if self.future > MAX_HORIZON as usize {
            return Err(GridError::Input(format!(
                "future horizon {} exceeds {MAX_HORIZON}",
                self.future
            )));
        }
        Ok(())
    }
}

const MAX_HORIZON: u32 = 30;

/// Occupancy probability given to the predicted cell at time index `t`:
/// `0.47 + sqrt(0.236 - 0.004 t)`, defined for `0 <= t <= 30`.
pub fn occupancy_probability<T: Scalar>(t: T) -> Result<T, GridError> {
    if !(t >= T::zero() && t <= T::lit(MAX_HORIZON as f64)) {
        return Err(GridError::Domain(t.as_f64()));
    }
    Ok(T::lit(0.47) + (T::lit(0.236) - T::lit(0.004) * t).sqrt())
}

/// Grid cell of `other` relative to `ego`, or `None` outside the grid.
/// `dy` is measured along travel; lanes are numbered left to right.
pub fn cell_index<T: Scalar>(
    spec: &GridSpec,
    ego_y: T,
    ego_lane: i64,
    other_y: T,
    other_lane: i64,
) -> Option<(usize, usize)> {
    let dl = other_lane - ego_lane;
    if dl.abs() > 1 {
        return None;
    }
    let steps = ((other_y - ego_y) / T::lit(spec.cell_length)).round();
    let row = T::lit(spec.ego_row() as f64) - steps;
    if row < T::zero() || row > T::lit((spec.rows - 1) as f64) {
        return None;
    }
    Some((row.to_usize()?, (dl + 1) as usize))
}

/// Longitudinal position and lane of one vehicle at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePos {
    pub y: f64,
    pub lane: i64,
}

/// Inputs for one surrounding vehicle: positions over the past channels
/// (`None` when absent from the scene at that frame) and its predicted
/// future positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborInput {
    pub vehicle_id: u32,
    pub history: Vec<Option<LanePos>>,
    pub prediction: Option<PredictionResult<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextGrid {
    spec: GridSpec,
    /// Channel-major: `values[(channel * rows + row) * cols + col]`.
    values: Vec<f64>,
}

impl ContextGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != spec.len() {
            return Err(GridError::Input(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, row: usize, col: usize, channel: usize) -> usize {
        (channel * self.spec.rows + row) * self.spec.cols + col
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[self.offset(row, col, channel)]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let n = self.spec.rows * self.spec.cols;
        &self.values[channel * n..(channel + 1) * n]
    }

    fn raise(&mut self, row: usize, col: usize, channel: usize, v: f64) {
        let i = self.offset(row, col, channel);
        if v > self.values[i] {
            self.values[i] = v;
        }
    }

    /// Deposits one vehicle's POM mass centred on `(row, col)`.
    fn deposit_pom(&mut self, row: usize, col: usize, channel: usize, p: f64) {
        let side = (1.0 - p) / 8.0;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (r, c) = (row as i64 + dr, col as i64 + dc);
                if r < 0 || c < 0 || r >= self.spec.rows as i64 || c >= self.spec.cols as i64 {
                    continue;
                }
                let v = if dr == 0 && dc == 0 { p } else { side };
                self.raise(r as usize, c as usize, channel, v);
            }
        }
    }

    /// Past channels binary, future channels in [0, 1].
    pub fn check_invariants(&self) -> bool {
        let n = self.spec.rows * self.spec.cols;
        let (past, future) = self.values.split_at(self.spec.past * n);
        past.iter().all(|&v| v == 0.0 || v == 1.0) && future.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Text dump: a `# channel c` line followed by one line per row.
    pub fn dump_text(&self) -> String {
        let mut s = String::new();
        for ch in 0..self.spec.channels() {
            let _ = writeln!(s, "# channel {ch}");
            for r in 0..self.spec.rows {
                let row: Vec<String> =
                    (0..self.spec.cols).map(|c| self.get(r, c, ch).to_string()).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn parse_text(spec: GridSpec, text: &str) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(spec.len());
        let mut channel = 0usize;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("# channel ") {
                let c: usize = rest
                    .parse()
                    .map_err(|_| GridError::Parse(format!("bad channel header `{line}`")))?;
                if c != channel {
                    return Err(GridError::Parse(format!("expected channel {channel}, found {c}")));
                }
                channel += 1;
                continue;
            }
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| GridError::Parse(format!("bad value `{tok}`")))?,
                );
            }
        }
        Self::from_values(spec, values)
    }
}

/// Builds the grid for the current frame `t`. Past channel `c` holds
/// occupancy at frame `t - past + 1 + c` relative to the ego position at
/// that frame; future channel `past + k - 1` holds the POM for horizon `k`
/// relative to the ego's current position. Overlapping vehicles combine by
/// per-cell maximum.
pub fn build_grid(
    spec: &GridSpec,
    lanes: &LaneConfig,
    ego_history: &[LanePos],
    neighbors: &[NeighborInput],
) -> Result<ContextGrid, GridError> {
    spec.validate()?;
    if ego_history.len() != spec.past {
        return Err(GridError::Input(format!(
            "ego history has {} frames, expected {}",
            ego_history.len(),
            spec.past
        )));
    }
    let mut grid = ContextGrid::zeros(*spec);
    let ego_now = ego_history[spec.past - 1];

    for nb in neighbors {
        if nb.history.len() != spec.past {
            return Err(GridError::Input(format!(
                "vehicle {} history has {} frames, expected {}",
                nb.vehicle_id,
                nb.history.len(),
                spec.past
            )));
        }
        for (c, (pos, ego)) in nb.history.iter().zip(ego_history).enumerate() {
            if let Some(pos) = pos {
                if let Some((r, col)) = cell_index(spec, ego.y, ego.lane, pos.y, pos.lane) {
                    grid.raise(r, col, c, 1.0);
                }
            }
        }

        let in_range = nb.history[spec.past - 1]
            .and_then(|p| cell_index(spec, ego_now.y, ego_now.lane, p.y, p.lane))
            .is_some();
        let Some(pred) = &nb.prediction else {
            if in_range && spec.future > 0 {
                return Err(GridError::Input(format!(
                    "missing prediction for in-range vehicle {}",
                    nb.vehicle_id
                )));
            }
            continue;
        };
        if pred.horizon() < spec.future {
            return Err(GridError::Input(format!(
                "vehicle {} prediction covers {} steps, expected {}",
                nb.vehicle_id,
                pred.horizon(),
                spec.future
            )));
        }
        for (k, &(x, y)) in pred.positions.iter().take(spec.future).enumerate() {
            let p = occupancy_probability((k + 1) as f64)?;
            let lane = lanes.lane_of_x(x);
            if let Some((r, col)) = cell_index(spec, ego_now.y, ego_now.lane, y, lane) {
                grid.deposit_pom(r, col, spec.past + k, p);
            }
        }
    }
    Ok(grid)
}
