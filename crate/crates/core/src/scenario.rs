//! Scenario files: configuration, orchestration of build and verification,
//! and the JSON/CSV outputs.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alignment::{
    eta_block_scan, max_simplex_volume, normalize_pair, procrustes_align, BlockScan, LabelledPair,
    SimplexVolumeMax,
};
use crate::compact_set::{BallUnionSet, GeometryReport, WitnessLimits};
use crate::error::{Error, Result};
use crate::extension::{ExtensionConfig, ExtensionStructure};
use crate::geometry::{singular_range, vector, Ball, MotionRecord, Vector};
use crate::motions::{ConsistencyReport, MotionsRecord};
use crate::source_maps::{DistortionMeasurement, SourceMap, SourceMapRecord};
use crate::verification::{full_report, Thresholds, VerificationReport, VerificationSettings};
use crate::whitney::{
    BallConstants, DecompositionStats, DEFAULT_CUBE_CAP, DEFAULT_EXPONENT, MAX_DIM,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub samples: usize,
    pub pairs: usize,
    pub grid_resolution: usize,
    pub fd_points: usize,
    pub roundtrip_points: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            samples: 10_000,
            pairs: 10_000,
            grid_resolution: 64,
            fd_points: 1_000,
            roundtrip_points: 1_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub cube_cap: usize,
    pub tuple_cap: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            cube_cap: DEFAULT_CUBE_CAP,
            tuple_cap: 100_000,
        }
    }
}

/// Labelled point sets for the `align` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentInput {
    pub ys: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    pub eta: f64,
    #[serde(default)]
    pub proper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub epsilon_budget: f64,
    pub c0: f64,
    #[serde(rename = "C1", default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_exponent")]
    pub p: u32,
    #[serde(rename = "E")]
    pub balls: Vec<Ball>,
    pub phi: SourceMapRecord,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentInput>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_exponent() -> u32 {
    DEFAULT_EXPONENT
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| invalid(format!("malformed scenario: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without running the pipeline.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n == 0 || self.n > MAX_DIM {
            return Err(invalid(format!(
                "n must lie in 1..={MAX_DIM}, got {}",
                self.n
            )));
        }
        if !(self.epsilon_budget > 0.0 && self.epsilon_budget.is_finite()) {
            return Err(invalid("epsilon_budget must be positive"));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(invalid(format!("c0 must be positive, got {}", self.c0)));
        }
        if self.c1.is_some_and(|c| !(c >= 1.0)) {
            return Err(invalid("C1 must be at least 1"));
        }
        if self.c2.is_some_and(|c| !(c > 0.0)) {
            return Err(invalid("c2 must be positive"));
        }
        if self.eta.is_some_and(|e| !(e > 0.0)) {
            return Err(invalid("eta must be positive"));
        }
        if self.p == 0 {
            return Err(invalid("p must be at least 1"));
        }
        if self.balls.is_empty() {
            return Err(invalid("E needs at least one ball"));
        }
        for (i, b) in self.balls.iter().enumerate() {
            if b.dim() != self.n {
                return Err(invalid(format!(
                    "ball {i} has dimension {}, expected {}",
                    b.dim(),
                    self.n
                )));
            }
            Ball::new(b.center(), b.radius)?;
        }
        let s = &self.sampling;
        if s.samples == 0
            || s.pairs == 0
            || s.grid_resolution < 2
            || s.fd_points == 0
            || s.roundtrip_points == 0
        {
            return Err(invalid(
                "sampling counts must be positive and grid_resolution >= 2",
            ));
        }
        if self.caps.cube_cap == 0 || self.caps.tuple_cap == 0 {
            return Err(invalid("caps must be positive"));
        }
        if let Some(a) = &self.alignment {
            if a.ys.iter().chain(&a.zs).any(|p| p.len() != self.n) {
                return Err(invalid("alignment points must have dimension n"));
            }
            if !(a.eta > 0.0) {
                return Err(invalid("alignment eta must be positive"));
            }
        }
        Ok(())
    }

    pub fn limits(&self) -> WitnessLimits {
        WitnessLimits {
            c1: self.c1,
            c2: self.c2,
        }
    }

    pub fn set(&self) -> Result<BallUnionSet> {
        BallUnionSet::new(self.balls.clone())
    }

    pub fn source_map(&self) -> Result<SourceMap> {
        SourceMap::from_record(&self.phi, self.n, self.epsilon_budget)
    }

    pub fn extension_config(&self) -> ExtensionConfig {
        ExtensionConfig {
            epsilon_budget: self.epsilon_budget,
            c0: self.c0,
            eta: self.eta,
            p: self.p,
            limits: self.limits(),
            cube_cap: self.caps.cube_cap,
            samples: self.sampling.samples,
            pairs: self.sampling.pairs,
            seed: self.sampling.seed,
        }
    }

    pub fn verification_settings(&self) -> VerificationSettings {
        VerificationSettings {
            samples: self.sampling.samples,
            pairs: self.sampling.pairs,
            grid_resolution: self.sampling.grid_resolution,
            fd_points: self.sampling.fd_points,
            roundtrip_points: self.sampling.roundtrip_points,
            seed: self.sampling.seed,
        }
    }

    pub fn build(&self) -> Result<ExtensionStructure> {
        ExtensionStructure::build(&self.set()?, &self.source_map()?, &self.extension_config())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSection {
    pub normalization_scale: f64,
    pub eta: f64,
    pub regularized_distance_lower: f64,
    #[serde(flatten)]
    pub stats: DecompositionStats,
    pub balls: BallConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionsSection {
    pub distortion: DistortionMeasurement,
    #[serde(flatten)]
    pub fitted: MotionsRecord,
    pub consistency: ConsistencyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build_seconds: f64,
    pub verify_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub geometry: GeometryReport,
    pub decomposition: DecompositionSection,
    pub motions: MotionsSection,
    pub verification: VerificationReport,
    pub pass: bool,
    /// Wall-clock timings; left empty unless requested so that reports stay
    /// byte-reproducible.
    pub timings: Option<Timings>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Builds the extension described by `config` and verifies it.
pub fn run_scenario(config: &ScenarioConfig, with_timings: bool) -> Result<ScenarioReport> {
    config.validate()?;
    let started = Instant::now();
    let ext = config.build()?;
    let built = started.elapsed();
    let started = Instant::now();
    let verification = full_report(&ext, &config.verification_settings(), &config.thresholds);
    let verified = started.elapsed();

    let decomp = ext.decomposition();
    let balls = decomp.ball_constants(
        ext.regularized_distance(),
        config.sampling.samples,
        config.sampling.seed,
    );
    let pass = verification.pass;
    Ok(ScenarioReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        geometry: ext.geometry().clone(),
        decomposition: DecompositionSection {
            normalization_scale: ext.normalized_set().scale(),
            eta: ext.eta(),
            regularized_distance_lower: ext.regularized_distance().lower_constant(),
            stats: decomp.stats(),
            balls,
        },
        motions: MotionsSection {
            distortion: ext.distortion().clone(),
            fitted: ext.assignment().record(),
            consistency: ext.consistency().clone(),
        },
        verification,
        pass,
        timings: with_timings.then_some(Timings {
            build_seconds: built.as_secs_f64(),
            verify_seconds: verified.as_secs_f64(),
        }),
    })
}

/// Normalizes `E` and certifies its interior-ball constants.
pub fn validate_geometry(config: &ScenarioConfig) -> Result<GeometryReport> {
    config.validate()?;
    let (normalized, _) = config.set()?.normalize_to_unit_diameter()?;
    normalized.validate_geometry(
        config.c0,
        config.sampling.samples,
        config.sampling.seed,
        &config.limits(),
    )
}

/// CSV of `Φ` on a `g^n` grid over the bounding box of `E` widened by
/// `2 c0 diam E`, one row per node.
pub fn dump_field(ext: &ExtensionStructure, grid_resolution: usize) -> String {
    let n = ext.dim();
    let g = grid_resolution.max(2);
    let (lo, hi) = ext.set().bounding_box();
    let pad = 2.0 * ext.c0() * ext.set().diameter();
    let lo = lo.add_scalar(-pad);
    let hi = hi.add_scalar(pad);
    let mut out = String::new();
    let header: Vec<String> = (1..=n)
        .map(|k| format!("x_{k}"))
        .chain((1..=n).map(|k| format!("Phi_{k}")))
        .chain(["sigma_min".into(), "sigma_max".into(), "region".into()])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..g.pow(n as u32) {
        let mut rest = i;
        let mut x = Vector::zeros(n);
        for k in (0..n).rev() {
            let step = (rest % g) as f64 / (g - 1) as f64;
            x[k] = lo[k] + (hi[k] - lo[k]) * step;
            rest /= g;
        }
        let y = ext.eval(&x);
        let (smin, smax) = singular_range(&ext.grad(&x));
        let region = ext.region(&x);
        let row: Vec<String> = x
            .iter()
            .chain(y.iter())
            .map(|v| v.to_string())
            .chain([
                smin.to_string(),
                smax.to_string(),
                region.label().to_string(),
            ])
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub schema_version: u32,
    pub point_count: usize,
    pub proper: bool,
    pub motion: MotionRecord,
    pub max_residual: f64,
    pub diameter: f64,
    /// `max_residual / diam {y}`.
    pub relative_residual: f64,
    pub normalized: Option<NormalizedPair>,
    pub blocks: Option<BlockScan>,
    pub max_simplex_volume: Option<SimplexVolumeMax>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPair {
    pub ys: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
}

/// Runs Procrustes alignment, normalization, block scan and the simplex
/// volume extremum on the scenario's labelled point sets.
pub fn align(config: &ScenarioConfig) -> Result<AlignmentReport> {
    config.validate()?;
    let input = config
        .alignment
        .as_ref()
        .ok_or_else(|| invalid("scenario has no `alignment` section"))?;
    let to_vecs = |pts: &[Vec<f64>]| pts.iter().map(|p| vector(p)).collect::<Vec<_>>();
    let pair = LabelledPair::new(to_vecs(&input.ys), to_vecs(&input.zs))?;
    let n = pair.dim();
    let (motion, max_residual) = procrustes_align(&pair, input.proper)?;
    let mut diameter: f64 = 0.0;
    for a in pair.ys() {
        for b in pair.ys() {
            diameter = diameter.max((a - b).norm());
        }
    }
    let normalized = if pair.len() >= 2 {
        let p = normalize_pair(&pair)?;
        let rows = |v: &[Vector]| v.iter().map(|p| p.iter().copied().collect()).collect();
        Some(NormalizedPair {
            ys: rows(p.ys()),
            zs: rows(p.zs()),
        })
    } else {
        None
    };
    let blocks = if pair.len() > n {
        Some(eta_block_scan(&pair, input.eta, config.caps.tuple_cap)?)
    } else {
        None
    };
    let l = n.min(pair.len() - 1);
    let max_simplex_volume = if l >= 1 {
        Some(max_simplex_volume(pair.ys(), l, config.caps.tuple_cap)?)
    } else {
        None
    };
    Ok(AlignmentReport {
        schema_version: SCHEMA_VERSION,
        point_count: pair.len(),
        proper: input.proper,
        motion: motion.to_record(),
        max_residual,
        diameter,
        relative_residual: if diameter > 0.0 {
            max_residual / diameter
        } else {
            0.0
        },
        normalized,
        blocks,
        max_simplex_volume,
    })
}
