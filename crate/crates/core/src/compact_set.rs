//! The compact set `E`, modelled as a finite union of closed balls.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vector, Ball, Vector};
use crate::sampling::{in_ball, in_box, rng_for};

/// Similarity `x ↦ c + s (x - c)` used to bring `E` to unit diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Similarity {
    pub fn identity(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        if self.is_identity() {
            return x.clone();
        }
        let c = vector(&self.center);
        &c + (x - &c) * self.scale
    }

    pub fn invert(&self, y: &Vector) -> Vector {
        if self.is_identity() {
            return y.clone();
        }
        let c = vector(&self.center);
        &c + (y - &c) / self.scale
    }
}

/// Bounds on the witness ball constants; `None` leaves a side unconstrained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WitnessLimits {
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

/// Interior ball returned for a query point, with the ratios it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub index: usize,
    pub ball: Ball,
    /// `|z - x| / d(x)`
    pub c1_ratio: f64,
    /// `r / d(x)`
    pub c2_ratio: f64,
}

/// Empirical constants of the interior-ball assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub c0: f64,
    #[serde(rename = "C1_achieved")]
    pub c1_achieved: f64,
    pub c2_achieved: f64,
    pub sample_count: usize,
    pub attempts: usize,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallUnionSet {
    balls: Vec<Ball>,
    diameter: f64,
    scale: f64,
}

impl BallUnionSet {
    pub fn new(balls: Vec<Ball>) -> Result<Self> {
        let Some(first) = balls.first() else {
            return Err(Error::InvalidConfig("E needs at least one ball".into()));
        };
        let n = first.dim();
        if n == 0 || balls.iter().any(|b| b.dim() != n) {
            return Err(Error::Dimension(
                "balls of E have mixed or zero dimension".into(),
            ));
        }
        let diameter = diameter_of(&balls);
        Ok(Self {
            balls,
            diameter,
            scale: 1.0,
        })
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn dim(&self) -> usize {
        self.balls[0].dim()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Factor applied by [`Self::normalize_to_unit_diameter`] (1 if never
    /// normalized).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn min_radius(&self) -> f64 {
        self.balls
            .iter()
            .map(|b| b.radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume-weighted mean of the ball centers.
    pub fn centroid(&self) -> Vector {
        let n = self.dim();
        let mut acc = Vector::zeros(n);
        let mut total = 0.0;
        for b in &self.balls {
            let w = b.radius.powi(n as i32);
            acc += b.center() * w;
            total += w;
        }
        acc / total
    }

    /// `d(x) = dist(x, E)`.
    pub fn distance(&self, x: &Vector) -> f64 {
        self.balls
            .iter()
            .map(|b| b.distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.distance(x) == 0.0
    }

    /// Exact distance from `E` to the axis-aligned box `[lo, hi]`.
    pub fn distance_to_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.balls
            .iter()
            .map(|b| {
                let sq: f64 = b
                    .center
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| {
                        let gap = (lo[k] - c).max(c - hi[k]).max(0.0);
                        gap * gap
                    })
                    .sum();
                (sq.sqrt() - b.radius).max(0.0)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Rigorous upper bound on `sup d` over the box `[lo, hi]`: each
    /// `|x - z_i| - r_i` is convex, so its maximum sits at a corner, and
    /// `d = min_i` of those.
    pub fn distance_upper_bound_on_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let n = lo.len();
        self.balls
            .iter()
            .map(|b| {
                let sq: f64 = (0..n)
                    .map(|k| {
                        let far = (b.center[k] - lo[k]).abs().max((hi[k] - b.center[k]).abs());
                        far * far
                    })
                    .sum();
                (sq.sqrt() - b.radius).max(0.0)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Bounding box `[lo, hi]` of `E`.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        let n = self.dim();
        let mut lo = Vector::from_element(n, f64::INFINITY);
        let mut hi = Vector::from_element(n, f64::NEG_INFINITY);
        for b in &self.balls {
            for k in 0..n {
                lo[k] = lo[k].min(b.center[k] - b.radius);
                hi[k] = hi[k].max(b.center[k] + b.radius);
            }
        }
        (lo, hi)
    }

    /// `max_i (|z_i|_∞ + r_i)`: half-width of the smallest origin-centred
    /// cube containing `E`.
    pub fn sup_norm_extent(&self) -> f64 {
        self.balls
            .iter()
            .map(|b| b.center.iter().fold(0.0f64, |m, c| m.max(c.abs())) + b.radius)
            .fold(0.0, f64::max)
    }

    /// Scales `E` about its centroid so that `diam E = 1`.
    pub fn normalize_to_unit_diameter(&self) -> Result<(BallUnionSet, Similarity)> {
        if !(self.diameter >= 1e-12) {
            return Err(Error::DegenerateSet {
                measure: self.diameter,
            });
        }
        let s = 1.0 / self.diameter;
        let sim = Similarity {
            center: self.centroid().iter().copied().collect(),
            scale: s,
        };
        if s == 1.0 {
            return Ok((self.clone(), Similarity::identity(self.dim())));
        }
        let balls = self
            .balls
            .iter()
            .map(|b| Ball::new(sim.apply(&b.center()), b.radius * s))
            .collect::<Result<Vec<_>>>()?;
        let mut out = BallUnionSet::new(balls)?;
        // Remove rounding drift so the recorded diameter is exactly one.
        out.diameter = if (out.diameter - 1.0).abs() <= 1e-12 {
            1.0
        } else {
            out.diameter
        };
        out.scale = self.scale * s;
        Ok((out, sim))
    }

    /// Interior witness ball for `x`: the input ball maximizing
    /// `r_i / (|z_i - x| + r_i)`, lowest index on ties.
    pub fn interior_ball_query(
        &self,
        x: &Vector,
        c0: f64,
        limits: &WitnessLimits,
    ) -> Result<Witness> {
        let d = self.distance(x);
        let limit = c0 * self.diameter;
        if !(d > 0.0) || d > limit {
            return Err(Error::OutOfRange { distance: d, limit });
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in self.balls.iter().enumerate() {
            let score = b.radius / (b.center_distance(x) + b.radius);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (index, _) = best.expect("E is nonempty");
        let ball = self.balls[index].clone();
        let c1_ratio = ball.center_distance(x) / d;
        let c2_ratio = ball.radius / d;
        let violates =
            limits.c1.is_some_and(|c1| c1_ratio > c1) || limits.c2.is_some_and(|c2| c2_ratio < c2);
        if violates {
            return Err(Error::NoWitness {
                point: x.iter().copied().collect(),
                c1: c1_ratio,
                c2: c2_ratio,
            });
        }
        Ok(Witness {
            index,
            ball,
            c1_ratio,
            c2_ratio,
        })
    }

    /// Uniform sample from `E`, choosing a ball with probability proportional
    /// to its volume.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n = self.dim() as i32;
        let total: f64 = self.balls.iter().map(|b| b.radius.powi(n)).sum();
        let mut pick = rng.gen::<f64>() * total;
        for b in &self.balls {
            let w = b.radius.powi(n);
            if pick < w {
                return in_ball(rng, &b.center(), b.radius);
            }
            pick -= w;
        }
        let last = self.balls.last().expect("E is nonempty");
        in_ball(rng, &last.center(), last.radius)
    }

    /// Empirically certifies the interior-ball constants on points drawn
    /// uniformly from `{0 < d(x) <= c0 diam E}`.
    pub fn validate_geometry(
        &self,
        c0: f64,
        samples: usize,
        seed: u64,
        limits: &WitnessLimits,
    ) -> Result<GeometryReport> {
        if samples == 0 {
            return Err(Error::InvalidConfig(
                "validate_geometry needs samples >= 1".into(),
            ));
        }
        let reach = c0 * self.diameter;
        let (lo, hi) = self.bounding_box();
        let lo = lo.add_scalar(-reach);
        let hi = hi.add_scalar(reach);
        let mut rng = rng_for(seed, STREAM_GEOMETRY);
        let mut c1_achieved: f64 = 0.0;
        let mut c2_achieved = f64::INFINITY;
        let mut worst = lo.clone();
        let mut accepted = 0;
        let mut attempts = 0;
        let max_attempts = samples.saturating_mul(10_000);
        while accepted < samples {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::InvalidConfig(format!(
                    "rejection sampling found only {accepted} of {samples} points near E"
                )));
            }
            let x = in_box(&mut rng, &lo, &hi);
            let d = self.distance(&x);
            if !(d > 0.0 && d <= reach) {
                continue;
            }
            accepted += 1;
            let w = self.interior_ball_query(&x, c0, limits)?;
            if w.c1_ratio > c1_achieved {
                c1_achieved = w.c1_ratio;
                worst = x.clone();
            }
            c2_achieved = c2_achieved.min(w.c2_ratio);
        }
        Ok(GeometryReport {
            c0,
            c1_achieved,
            c2_achieved,
            sample_count: accepted,
            attempts,
            worst_point: worst.iter().copied().collect(),
        })
    }
}

const STREAM_GEOMETRY: u64 = 1;

fn diameter_of(balls: &[Ball]) -> f64 {
    let mut diam: f64 = 0.0;
    for (i, a) in balls.iter().enumerate() {
        for b in &balls[i..] {
            diam = diam.max(a.center_distance(&b.center()) + a.radius + b.radius);
        }
    }
    diam
}
