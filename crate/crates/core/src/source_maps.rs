//! Built-in smooth near-isometries `φ` with analytic Jacobians.

use serde::{Deserialize, Serialize};

use crate::compact_set::{BallUnionSet, Similarity};
use crate::error::{Error, Result};
use crate::geometry::{
    matrix_from_rows, op_norm, rows_of, spectral_distortion, vector, EuclideanMotion, Matrix,
    MotionRecord, Vector,
};
use crate::sampling::{in_ball, rng_for};

/// A map `R^n → R^n` with an analytic Jacobian.
pub trait SmoothMap: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Vector) -> Vector;
    fn grad(&self, x: &Vector) -> Matrix;
}

/// Serialized form of a [`SourceMap`], as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceMapRecord {
    Motion {
        linear: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    SlowTwist {
        amplitudes: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<Vec<Vec<f64>>>,
    },
    Slide {
        amplitude: Vec<f64>,
        frequency: Vec<Vec<f64>>,
    },
    Compose {
        maps: Vec<SourceMapRecord>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceMap {
    Motion(EuclideanMotion),
    /// `x ↦ Θᵀ S(|x|) x`, with `S` block-diagonal: a rotation by
    /// `f_i(t) = a_i log(1 + t)` on coordinates `(2i, 2i+1)` and 1 on a
    /// leftover last coordinate.
    SlowTwist {
        amplitudes: Vec<f64>,
        frame: Matrix,
    },
    /// `x ↦ x + a ⊙ sin(Ω x)`.
    Slide {
        amplitude: Vector,
        frequency: Matrix,
    },
    /// Applied in list order: `maps[0]` acts first.
    Compose(Vec<SourceMap>),
}

impl SourceMap {
    pub fn identity(n: usize) -> Self {
        SourceMap::Motion(EuclideanMotion::identity(n))
    }

    pub fn slow_twist(amplitudes: Vec<f64>, frame: Matrix, budget: f64) -> Result<Self> {
        let n = frame.nrows();
        if frame.ncols() != n || amplitudes.len() != n / 2 {
            return Err(Error::Dimension(format!(
                "slow twist in R^{n} needs {} amplitudes and an {n}x{n} frame",
                n / 2
            )));
        }
        // Validates orthogonality of the frame.
        EuclideanMotion::new(frame.clone(), Vector::zeros(n))?;
        let map = SourceMap::SlowTwist { amplitudes, frame };
        map.check_budget(budget)?;
        Ok(map)
    }

    pub fn slide(amplitude: Vector, frequency: Matrix, budget: f64) -> Result<Self> {
        let n = amplitude.len();
        if frequency.nrows() != n || frequency.ncols() != n {
            return Err(Error::Dimension(format!(
                "slide amplitude has length {n}, frequency matrix is {}x{}",
                frequency.nrows(),
                frequency.ncols()
            )));
        }
        let map = SourceMap::Slide {
            amplitude,
            frequency,
        };
        map.check_budget(budget)?;
        Ok(map)
    }

    pub fn compose(maps: Vec<SourceMap>, budget: f64) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::InvalidConfig(
                "compose needs at least one map".into(),
            ));
        };
        let n = first.dim();
        if maps.iter().any(|m| m.dim() != n) {
            return Err(Error::Dimension(
                "composed maps have mixed dimensions".into(),
            ));
        }
        let map = SourceMap::Compose(maps);
        map.check_budget(budget)?;
        Ok(map)
    }

    /// Closed-form bound on `sup_x max(σ_max - 1, 1 - σ_min)` of `∇φ`.
    pub fn distortion_bound(&self) -> f64 {
        match self {
            SourceMap::Motion(_) => 0.0,
            SourceMap::SlowTwist { amplitudes, .. } => {
                amplitudes.iter().fold(0.0, |m, a| m.max(a.abs()))
            }
            SourceMap::Slide {
                amplitude,
                frequency,
            } => amplitude.norm() * op_norm(frequency),
            SourceMap::Compose(maps) => {
                maps.iter()
                    .map(|m| 1.0 + m.distortion_bound())
                    .product::<f64>()
                    - 1.0
            }
        }
    }

    fn check_budget(&self, budget: f64) -> Result<()> {
        let bound = self.distortion_bound();
        if bound > budget {
            return Err(Error::DistortionBudgetExceeded {
                measured: bound,
                budget,
            });
        }
        Ok(())
    }

    pub fn from_record(record: &SourceMapRecord, n: usize, budget: f64) -> Result<Self> {
        let map = match record {
            SourceMapRecord::Motion { linear, offset } => {
                let m = MotionRecord {
                    linear: linear.clone(),
                    offset: offset.clone(),
                }
                .to_motion()?;
                SourceMap::Motion(m)
            }
            SourceMapRecord::SlowTwist { amplitudes, frame } => {
                let frame = match frame {
                    Some(rows) => matrix_from_rows(rows)?,
                    None => Matrix::identity(n, n),
                };
                SourceMap::slow_twist(amplitudes.clone(), frame, budget)?
            }
            SourceMapRecord::Slide {
                amplitude,
                frequency,
            } => SourceMap::slide(vector(amplitude), matrix_from_rows(frequency)?, budget)?,
            SourceMapRecord::Compose { maps } => {
                let inner = maps
                    .iter()
                    .map(|m| SourceMap::from_record(m, n, budget))
                    .collect::<Result<Vec<_>>>()?;
                SourceMap::compose(inner, budget)?
            }
        };
        if map.dim() != n {
            return Err(Error::Dimension(format!(
                "map acts on R^{}, scenario is in R^{n}",
                map.dim()
            )));
        }
        Ok(map)
    }

    pub fn to_record(&self) -> SourceMapRecord {
        match self {
            SourceMap::Motion(m) => {
                let r = m.to_record();
                SourceMapRecord::Motion {
                    linear: r.linear,
                    offset: r.offset,
                }
            }
            SourceMap::SlowTwist { amplitudes, frame } => SourceMapRecord::SlowTwist {
                amplitudes: amplitudes.clone(),
                frame: Some(rows_of(frame)),
            },
            SourceMap::Slide {
                amplitude,
                frequency,
            } => SourceMapRecord::Slide {
                amplitude: amplitude.iter().copied().collect(),
                frequency: rows_of(frequency),
            },
            SourceMap::Compose(maps) => SourceMapRecord::Compose {
                maps: maps.iter().map(SourceMap::to_record).collect(),
            },
        }
    }

    fn eval_grad(&self, x: &Vector, want_grad: bool) -> (Vector, Option<Matrix>) {
        match self {
            SourceMap::Motion(m) => (m.apply(x), want_grad.then(|| m.linear().clone())),
            SourceMap::SlowTwist { amplitudes, frame } => twist(amplitudes, frame, x, want_grad),
            SourceMap::Slide {
                amplitude,
                frequency,
            } => {
                let phase = frequency * x;
                let y = x + amplitude.component_mul(&phase.map(f64::sin));
                let grad = want_grad.then(|| {
                    let n = x.len();
                    let mut g = Matrix::identity(n, n);
                    for i in 0..n {
                        let w = amplitude[i] * phase[i].cos();
                        for j in 0..n {
                            g[(i, j)] += w * frequency[(i, j)];
                        }
                    }
                    g
                });
                (y, grad)
            }
            SourceMap::Compose(maps) => {
                let n = x.len();
                let mut y = x.clone();
                let mut jac = want_grad.then(|| Matrix::identity(n, n));
                for m in maps {
                    let (next, g) = m.eval_grad(&y, want_grad);
                    if let (Some(acc), Some(g)) = (jac.as_mut(), g) {
                        *acc = g * &*acc;
                    }
                    y = next;
                }
                (y, jac)
            }
        }
    }
}

fn twist(
    amplitudes: &[f64],
    frame: &Matrix,
    x: &Vector,
    want_grad: bool,
) -> (Vector, Option<Matrix>) {
    let n = x.len();
    let t = x.norm();
    let mut s = Matrix::identity(n, n);
    // Derivative of S with respect to t.
    let mut ds = Matrix::zeros(n, n);
    for (i, &a) in amplitudes.iter().enumerate() {
        let (p, q) = (2 * i, 2 * i + 1);
        let f = a * t.ln_1p();
        let df = a / (1.0 + t);
        let (sin, cos) = f.sin_cos();
        s[(p, p)] = cos;
        s[(p, q)] = sin;
        s[(q, p)] = -sin;
        s[(q, q)] = cos;
        ds[(p, p)] = -sin * df;
        ds[(p, q)] = cos * df;
        ds[(q, p)] = -cos * df;
        ds[(q, q)] = -sin * df;
    }
    let ft = frame.transpose();
    let y = &ft * (&s * x);
    let grad = want_grad.then(|| {
        let mut inner = s.clone();
        if t > 0.0 {
            let sx = &ds * x;
            inner += (sx / t) * x.transpose();
        }
        &ft * inner
    });
    (y, grad)
}

impl SmoothMap for SourceMap {
    fn dim(&self) -> usize {
        match self {
            SourceMap::Motion(m) => m.dim(),
            SourceMap::SlowTwist { frame, .. } => frame.nrows(),
            SourceMap::Slide { amplitude, .. } => amplitude.len(),
            SourceMap::Compose(maps) => maps[0].dim(),
        }
    }

    fn eval(&self, x: &Vector) -> Vector {
        self.eval_grad(x, false).0
    }

    fn grad(&self, x: &Vector) -> Matrix {
        self.eval_grad(x, true).1.expect("gradient requested")
    }
}

/// `φ` seen in rescaled coordinates: `x' ↦ S(φ(S⁻¹ x'))` for a similarity
/// `S`. The Jacobian is unchanged because the scale factors cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledMap {
    pub map: SourceMap,
    pub frame: Similarity,
}

impl SmoothMap for RescaledMap {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn eval(&self, x: &Vector) -> Vector {
        self.frame.apply(&self.map.eval(&self.frame.invert(x)))
    }

    fn grad(&self, x: &Vector) -> Matrix {
        self.map.grad(&self.frame.invert(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionMeasurement {
    pub eps_pairwise: f64,
    pub eps_matrix: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl DistortionMeasurement {
    pub fn eps(&self) -> f64 {
        self.eps_pairwise.max(self.eps_matrix)
    }
}

const STREAM_DISTORTION: u64 = 11;
const STREAM_FIRST_ORDER: u64 = 12;

/// Samples distortion of `φ` over `E`: pairwise ratios on `pairs` pairs and
/// Jacobian singular values on as many points.
pub fn measure_distortion_on_set<M: SmoothMap + ?Sized>(
    phi: &M,
    set: &BallUnionSet,
    pairs: usize,
    seed: u64,
) -> Result<DistortionMeasurement> {
    if pairs == 0 {
        return Err(Error::InvalidConfig(
            "distortion measurement needs pairs >= 1".into(),
        ));
    }
    let mut rng = rng_for(seed, STREAM_DISTORTION);
    let mut eps_pairwise: f64 = 0.0;
    let mut eps_matrix: f64 = 0.0;
    for _ in 0..pairs {
        let x = set.sample_point(&mut rng);
        let y = set.sample_point(&mut rng);
        let gap = (&x - &y).norm();
        if gap > 1e-9 {
            let ratio = (phi.eval(&x) - phi.eval(&y)).norm() / gap;
            eps_pairwise = eps_pairwise.max((ratio - 1.0).abs());
        }
        eps_matrix = eps_matrix.max(spectral_distortion(&phi.grad(&x)));
    }
    Ok(DistortionMeasurement {
        eps_pairwise,
        eps_matrix,
        sample_count: pairs,
        seed,
    })
}

/// Sampled sup of `|φ(y) - φ(x) - ∇φ(x)(y - x)| / |y - x|` over `d(x) <= η`,
/// `|y - x| <= η`.
pub fn check_first_order<M: SmoothMap + ?Sized>(
    phi: &M,
    set: &BallUnionSet,
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidConfig(
            "first-order check needs samples >= 1".into(),
        ));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let n = set.dim();
    let mut rng = rng_for(seed, STREAM_FIRST_ORDER);
    let total: f64 = set
        .balls()
        .iter()
        .map(|b| (b.radius + eta).powi(n as i32))
        .sum();
    let mut sup: f64 = 0.0;
    for _ in 0..samples {
        let mut pick = rand::Rng::gen::<f64>(&mut rng) * total;
        let mut chosen = &set.balls()[0];
        for b in set.balls() {
            let w = (b.radius + eta).powi(n as i32);
            chosen = b;
            if pick < w {
                break;
            }
            pick -= w;
        }
        let x = in_ball(&mut rng, &chosen.center(), chosen.radius + eta);
        let y = in_ball(&mut rng, &x, eta);
        let step = &y - &x;
        let len = step.norm();
        if len <= 1e-12 {
            continue;
        }
        let linear = phi.eval(&x) + phi.grad(&x) * &step;
        sup = sup.max((phi.eval(&y) - linear).norm() / len);
    }
    Ok(sup)
}
