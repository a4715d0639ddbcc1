//! The blended extension `Φ = χ(δ) φ + (1 - χ(δ)) Σ_ν Θ_ν A_ν`, its
//! Jacobian, and a Newton inverse.

use serde::{Deserialize, Serialize};

use crate::compact_set::{BallUnionSet, GeometryReport, Similarity, WitnessLimits};
use crate::error::{Error, Result};
use crate::geometry::{EuclideanMotion, Matrix, Vector};
use crate::motions::{consistency_check, ConsistencyReport, MotionAssignment};
use crate::smooth::Cutoff;
use crate::source_maps::{
    measure_distortion_on_set, DistortionMeasurement, RescaledMap, SmoothMap, SourceMap,
};
use crate::whitney::{DecompositionConfig, RegularizedDistance, WhitneyDecomposition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionConfig {
    pub epsilon_budget: f64,
    pub c0: f64,
    /// Cutoff parameter; `None` selects `min(c0, r_min) / 10` in normalized
    /// coordinates.
    pub eta: Option<f64>,
    pub p: u32,
    pub limits: WitnessLimits,
    pub cube_cap: usize,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
}

/// Where a point sits relative to `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Region {
    /// `δ(x) <= η`: `Φ = φ`.
    Near,
    /// Between the two.
    Blend,
    /// `d(x) >= c0` or outside the root box: `Φ = A_∞`.
    Far,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Near => "NEAR",
            Region::Blend => "BLEND",
            Region::Far => "FAR",
        }
    }
}

/// Everything needed to evaluate `Φ` and `∇Φ`. Internally all work happens
/// in coordinates where `diam E = 1`; the public methods take and return
/// points in the caller's coordinates.
#[derive(Debug, Clone)]
pub struct ExtensionStructure {
    set: BallUnionSet,
    normalized: BallUnionSet,
    frame: Similarity,
    phi: RescaledMap,
    decomp: WhitneyDecomposition,
    assignment: MotionAssignment,
    rd: RegularizedDistance,
    cutoff: Cutoff,
    c0: f64,
    epsilon_budget: f64,
    distortion: DistortionMeasurement,
    geometry: GeometryReport,
    consistency: ConsistencyReport,
}

impl ExtensionStructure {
    /// Normalizes `E`, checks the distortion budget and the geometry of `E`,
    /// decomposes the complement, fits motions and measures their
    /// consistency.
    pub fn build(set: &BallUnionSet, phi: &SourceMap, config: &ExtensionConfig) -> Result<Self> {
        if phi.dim() != set.dim() {
            return Err(Error::Dimension(format!(
                "map acts on R^{}, E lives in R^{}",
                phi.dim(),
                set.dim()
            )));
        }
        if !(config.epsilon_budget > 0.0) {
            return Err(Error::InvalidConfig(
                "epsilon_budget must be positive".into(),
            ));
        }
        let (normalized, frame) = set.normalize_to_unit_diameter()?;
        let phi_n = RescaledMap {
            map: phi.clone(),
            frame: frame.clone(),
        };
        let distortion = measure_distortion_on_set(&phi_n, &normalized, config.pairs, config.seed)?;
        if distortion.eps() > config.epsilon_budget {
            return Err(Error::DistortionBudgetExceeded {
                measured: distortion.eps(),
                budget: config.epsilon_budget,
            });
        }

        let c0 = config.c0;
        let eta = config
            .eta
            .unwrap_or_else(|| c0.min(normalized.min_radius()) / 10.0);
        let rd = RegularizedDistance::new(&normalized, config.p)?;
        if !(rd.lower_constant() * c0 > 2.0 * eta) {
            return Err(Error::InvalidConfig(format!(
                "need m^(-1/p) c0 > 2 eta so the far field lies outside the cutoff band \
                 (m^(-1/p) c0 = {}, eta = {eta})",
                rd.lower_constant() * c0
            )));
        }
        let geometry =
            normalized.validate_geometry(c0, config.samples, config.seed, &config.limits)?;
        let decomp = WhitneyDecomposition::build(
            &normalized,
            &DecompositionConfig {
                c0,
                eta,
                cube_cap: config.cube_cap,
                limits: config.limits,
            },
        )?;
        let assignment = MotionAssignment::pick(&decomp, &phi_n, config.samples, config.seed)?;
        let consistency = consistency_check(
            &assignment,
            &decomp,
            &phi_n,
            &rd,
            config.samples,
            config.seed,
        );
        Ok(Self {
            set: set.clone(),
            normalized,
            frame,
            phi: phi_n,
            decomp,
            assignment,
            rd,
            cutoff: Cutoff::new(eta),
            c0,
            epsilon_budget: config.epsilon_budget,
            distortion,
            geometry,
            consistency,
        })
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn set(&self) -> &BallUnionSet {
        &self.set
    }

    pub fn normalized_set(&self) -> &BallUnionSet {
        &self.normalized
    }

    pub fn frame(&self) -> &Similarity {
        &self.frame
    }

    /// `φ` in normalized coordinates.
    pub fn phi(&self) -> &RescaledMap {
        &self.phi
    }

    pub fn decomposition(&self) -> &WhitneyDecomposition {
        &self.decomp
    }

    pub fn assignment(&self) -> &MotionAssignment {
        &self.assignment
    }

    pub fn regularized_distance(&self) -> &RegularizedDistance {
        &self.rd
    }

    pub fn cutoff(&self) -> &Cutoff {
        &self.cutoff
    }

    pub fn eta(&self) -> f64 {
        self.cutoff.eta
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn epsilon_budget(&self) -> f64 {
        self.epsilon_budget
    }

    pub fn distortion(&self) -> &DistortionMeasurement {
        &self.distortion
    }

    pub fn geometry(&self) -> &GeometryReport {
        &self.geometry
    }

    pub fn consistency(&self) -> &ConsistencyReport {
        &self.consistency
    }

    /// `A_∞` in the caller's coordinates.
    pub fn anchor_motion(&self) -> EuclideanMotion {
        let a = self.assignment.anchor();
        if self.frame.is_identity() {
            return a.clone();
        }
        // S⁻¹ ∘ A ∘ S keeps the linear part and moves the offset.
        let c = crate::geometry::vector(&self.frame.center);
        let s = self.frame.scale;
        let offset = a.offset() / s + (&c - a.linear() * &c) * (1.0 - 1.0 / s);
        EuclideanMotion::new(a.linear().clone(), offset).expect("linear part already orthogonal")
    }

    /// Region of a point given in normalized coordinates.
    pub fn region_normalized(&self, x: &Vector) -> Region {
        if !self.decomp.in_root_box(x) || self.normalized.distance(x) >= self.c0 {
            Region::Far
        } else if self.rd.value(x) <= self.eta() {
            Region::Near
        } else {
            Region::Blend
        }
    }

    pub fn region(&self, x: &Vector) -> Region {
        self.region_normalized(&self.frame.apply(x))
    }

    /// `(Θ̃_in, Θ̃_ν for each covering cube)` at a normalized point.
    pub fn partition_weights(&self, x: &Vector) -> (f64, Vec<(usize, f64)>) {
        let (chi, _) = self.cutoff.eval(self.rd.value(x));
        let terms = self
            .decomp
            .partition(x)
            .into_iter()
            .map(|t| (t.cube, (1.0 - chi) * t.value))
            .collect();
        (chi, terms)
    }

    /// `(Φ(x), ∇Φ(x), region)` in normalized coordinates.
    pub fn eval_grad_normalized(
        &self,
        x: &Vector,
        want_grad: bool,
    ) -> (Vector, Option<Matrix>, Region) {
        let region = self.region_normalized(x);
        match region {
            Region::Far => {
                let a = self.assignment.anchor();
                (a.apply(x), want_grad.then(|| a.linear().clone()), region)
            }
            Region::Near => (
                self.phi.eval(x),
                want_grad.then(|| self.phi.grad(x)),
                region,
            ),
            Region::Blend => {
                let (value, grad) = self.blend(x, want_grad);
                (value, grad, region)
            }
        }
    }

    fn blend(&self, x: &Vector, want_grad: bool) -> (Vector, Option<Matrix>) {
        let n = x.len();
        let (delta, grad_delta) = self.rd.eval(x);
        let (chi, dchi) = self.cutoff.eval(delta);
        let terms = self.decomp.partition(x);
        debug_assert!(!terms.is_empty(), "blend point not covered by any cube");
        let mut combo = Vector::zeros(n);
        let mut combo_grad = Matrix::zeros(n, n);
        for t in &terms {
            let a = self.assignment.for_cube(t.cube);
            let ax = a.apply(x);
            combo.axpy(t.value, &ax, 1.0);
            if want_grad {
                combo_grad += &ax * t.grad.transpose() + a.linear() * t.value;
            }
        }
        if terms.is_empty() {
            let a = self.assignment.anchor();
            combo = a.apply(x);
            combo_grad = a.linear().clone();
        }
        if chi == 0.0 {
            return (combo, want_grad.then_some(combo_grad));
        }
        let fx = self.phi.eval(x);
        let value = &fx * chi + &combo * (1.0 - chi);
        let grad = want_grad.then(|| {
            let grad_chi = grad_delta * dchi;
            (&fx - &combo) * grad_chi.transpose()
                + self.phi.grad(x) * chi
                + combo_grad * (1.0 - chi)
        });
        (value, grad)
    }

    pub fn eval_normalized(&self, x: &Vector) -> Vector {
        self.eval_grad_normalized(x, false).0
    }

    pub fn grad_normalized(&self, x: &Vector) -> Matrix {
        self.eval_grad_normalized(x, true)
            .1
            .expect("gradient requested")
    }

    /// `Φ(x)`.
    pub fn eval(&self, x: &Vector) -> Vector {
        self.frame
            .invert(&self.eval_normalized(&self.frame.apply(x)))
    }

    /// `∇Φ(x)`; the similarity's scale factors cancel.
    pub fn grad(&self, x: &Vector) -> Matrix {
        self.grad_normalized(&self.frame.apply(x))
    }

    /// Solves `Φ(x) = y` by damped Newton iteration from `A_∞⁻¹(y)`, to
    /// `|Φ(x) - y| <= 1e-10` within 50 iterations.
    pub fn invert(&self, y: &Vector) -> Result<Vector> {
        const TOLERANCE: f64 = 1e-10;
        const MAX_ITERATIONS: usize = 50;
        let target = self.frame.apply(y);
        let tol = TOLERANCE * self.frame.scale;
        let mut x = self.assignment.anchor().inverse().apply(&target);
        let mut residual = self.eval_normalized(&x) - &target;
        let mut trace = vec![residual.norm() / self.frame.scale];
        for _ in 0..MAX_ITERATIONS {
            if residual.norm() <= tol {
                return Ok(self.frame.invert(&x));
            }
            let jac = self.grad_normalized(&x);
            let Some(step) = jac.lu().solve(&residual) else {
                break;
            };
            let mut t = 1.0;
            let mut next = &x - &step;
            let mut next_res = self.eval_normalized(&next) - &target;
            while next_res.norm() >= residual.norm() && t > 1e-6 {
                t *= 0.5;
                next = &x - &step * t;
                next_res = self.eval_normalized(&next) - &target;
            }
            x = next;
            residual = next_res;
            trace.push(residual.norm() / self.frame.scale);
        }
        if residual.norm() <= tol {
            return Ok(self.frame.invert(&x));
        }
        Err(Error::NoConvergence {
            iterations: trace.len() - 1,
            residual: residual.norm() / self.frame.scale,
            trace,
        })
    }
}
