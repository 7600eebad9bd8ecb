//! TOML scenario files.
//!
//! ```toml
//! command = "optimize"
//! seed = 0
//! intervals = 200
//! multistart = 16
//!
//! [optimize]
//! boundary = "mine"          # or "elastica", "table1.f", ...
//!
//! [boundaries.mine]
//! initial = { x = 0.0, y = 0.0, phi = 0.0 }
//! terminal = { x = 0.5, y = 0.0, phi = 0.0 }
//! stroke = true
//! ```

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use copepod::ocp::{elastica_boundary, rotation_boundary, table1_row, BoundarySpec, EndValue, TranscriptionConfig, HORIZON};
use copepod::simulation::StrokeSpec;
use serde::Deserialize;

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Optimize,
    Analyze,
    Abnormal,
    Table1,
    Rotate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub command: Command,
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub intervals: Option<usize>,
    pub multistart: Option<usize>,
    /// Optimal-control horizon; only `2 pi` is supported.
    pub horizon: Option<f64>,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub optimize: OptimizeBlock,
    #[serde(default)]
    pub analyze: AnalyzeBlock,
    #[serde(default)]
    pub abnormal: AbnormalBlock,
    #[serde(default)]
    pub table1: Table1Block,
    #[serde(default)]
    pub rotate: RotateBlock,
    #[serde(default)]
    pub strokes: BTreeMap<String, StrokeBlock>,
    #[serde(default)]
    pub boundaries: BTreeMap<String, BoundaryBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    pub stroke: String,
    /// `(x, y, phi)` at `t = 0`; the legs start where the stroke does.
    pub pose: [f64; 3],
    pub tol: f64,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock { stroke: "triangle".into(), pose: [0.0; 3], tol: 1e-10 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeBlock {
    pub boundary: String,
}

impl Default for OptimizeBlock {
    fn default() -> Self {
        OptimizeBlock { boundary: "elastica".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeBlock {
    pub samples: usize,
    pub rank_tol: f64,
}

impl Default for AnalyzeBlock {
    fn default() -> Self {
        AnalyzeBlock { samples: 2000, rank_tol: copepod::liegeometry::DEFAULT_RANK_TOL }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbnormalBlock {
    /// Random parameter draws per family.
    pub draws: usize,
    /// Time samples per curve over `[0, 2 pi]`.
    pub samples: usize,
}

impl Default for AbnormalBlock {
    fn default() -> Self {
        AbnormalBlock { draws: 10, samples: 64 }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Block {
    /// Row labels to run, e.g. `"dfij"`; all rows when absent.
    pub rows: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotateBlock {
    pub delta_phi: f64,
}

impl Default for RotateBlock {
    fn default() -> Self {
        RotateBlock { delta_phi: std::f64::consts::PI }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrokeBlock {
    Ellipse { center: [f64; 2], radii: [f64; 2], phase: f64, period: f64 },
    Polygon { times: Vec<f64>, legs: Vec<[f64; 2]> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndBlock {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub phi: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
}

impl EndBlock {
    fn values(&self) -> [EndValue; 5] {
        [self.x, self.y, self.phi, self.theta1, self.theta2].map(|v| v.map_or(EndValue::Free, EndValue::Fixed))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryBlock {
    #[serde(default)]
    pub initial: EndBlock,
    #[serde(default)]
    pub terminal: EndBlock,
    #[serde(default)]
    pub stroke: bool,
    #[serde(default)]
    pub shape_periodic: bool,
    pub delta_phi: Option<f64>,
}

/// Configuration problem with a one-line description.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ConfigError(one_line(&e.to_string())))?;
        if let Some(h) = s.horizon {
            if (h - HORIZON).abs() > 1e-12 {
                return Err(ConfigError(format!("horizon must be 2*pi ({TAU}), got {h}")));
            }
        }
        Ok(s)
    }

    pub fn stroke(&self, name: &str) -> Result<StrokeSpec, ConfigError> {
        if name == "triangle" {
            return Ok(StrokeSpec::Triangle);
        }
        match self.strokes.get(name) {
            Some(StrokeBlock::Ellipse { center, radii, phase, period }) => Ok(StrokeSpec::Ellipse {
                center: *center,
                radii: *radii,
                phase: *phase,
                period: *period,
            }),
            Some(StrokeBlock::Polygon { times, legs }) => Ok(StrokeSpec::PiecewiseLinear {
                times: times.clone(),
                legs: legs.clone(),
            }),
            None => Err(ConfigError(format!("unknown stroke '{name}'"))),
        }
    }

    /// Built-in names: `elastica`, `rotation` (uses `[rotate].delta_phi`),
    /// `table1.<label>`.
    pub fn boundary(&self, name: &str) -> Result<BoundarySpec, ConfigError> {
        if let Some(b) = self.boundaries.get(name) {
            return Ok(BoundarySpec {
                initial: b.initial.values(),
                terminal: b.terminal.values(),
                stroke: b.stroke,
                shape_periodic: b.shape_periodic,
                delta_phi: b.delta_phi,
            });
        }
        match name {
            "elastica" => Ok(elastica_boundary()),
            "rotation" => Ok(rotation_boundary(self.rotate.delta_phi)),
            _ => name
                .strip_prefix("table1.")
                .and_then(|l| {
                    let mut c = l.chars();
                    match (c.next(), c.next()) {
                        (Some(ch), None) => table1_row(ch),
                        _ => None,
                    }
                })
                .map(|r| r.boundary())
                .ok_or_else(|| ConfigError(format!("unknown boundary '{name}'"))),
        }
    }

    pub fn transcription(&self, seed: Option<u64>, intervals: Option<usize>) -> TranscriptionConfig {
        let mut cfg = TranscriptionConfig::default();
        if let Some(n) = intervals.or(self.intervals) {
            cfg.intervals = n;
        }
        if let Some(m) = self.multistart {
            cfg.multistart = m;
        }
        if let Some(s) = seed.or(self.seed) {
            cfg.seed = s;
        }
        cfg
    }
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
