//! Dense vectors and matrices, Euclidean motions, orthonormalization and
//! simplex volumes.
//!
//! Everything here is dimension-generic at runtime; the ambient dimension of a
//! scenario is fixed once and carried implicitly by vector lengths.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Default lower bound on the smallest singular value of a frame handed to
/// [`gram_schmidt`].
pub const GS_TOLERANCE: f64 = 1e-6;

/// Orthogonality tolerance `max |TᵀT - I|` for the linear part of a motion.
pub const ORTHO_TOLERANCE: f64 = 1e-12;

pub fn vector(coords: &[f64]) -> Vector {
    DVector::from_column_slice(coords)
}

/// Largest singular value.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// `(σ_min, σ_max)` of a square matrix, from the symmetric eigenproblem of
/// `MᵀM`.
pub fn singular_range(m: &Matrix) -> (f64, f64) {
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigenvalues();
    let lo = eig.min().max(0.0).sqrt();
    let hi = eig.max().max(0.0).sqrt();
    (lo, hi)
}

/// `max(σ_max - 1, 1 - σ_min)`: how far a linear map is from an isometry.
pub fn spectral_distortion(m: &Matrix) -> f64 {
    let (lo, hi) = singular_range(m);
    (hi - 1.0).max(1.0 - lo).max(0.0)
}

/// Entrywise `max |QᵀQ - I|`.
pub fn orthogonality_defect(q: &Matrix) -> f64 {
    let n = q.ncols();
    let gram = q.transpose() * q;
    (gram - Matrix::identity(n, n)).amax()
}

/// Orthonormalizes `vectors` (taken as the columns of a frame) with modified
/// Gram–Schmidt plus one re-orthogonalization pass.
///
/// Column `k` of the result lies in the span of inputs `0..=k` and has a
/// positive coefficient on input `k`.
pub fn gram_schmidt(vectors: &[Vector]) -> Result<Matrix> {
    gram_schmidt_with_tol(vectors, GS_TOLERANCE)
}

pub fn gram_schmidt_with_tol(vectors: &[Vector], tol: f64) -> Result<Matrix> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::Dimension(
            "gram_schmidt needs at least one vector".into(),
        ));
    }
    let n = vectors[0].len();
    if vectors.iter().any(|v| v.len() != n) || k > n {
        return Err(Error::Dimension(format!(
            "gram_schmidt expects at most {n} vectors of length {n}"
        )));
    }
    let frame = Matrix::from_columns(vectors);
    let sigma_min = frame.singular_values().min();
    if !(sigma_min >= tol) {
        return Err(Error::DegenerateFrame { sigma_min, tol });
    }

    let mut q = Matrix::zeros(n, k);
    for (j, vj) in vectors.iter().enumerate() {
        let mut v = vj.clone();
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let coeff = qi.dot(&v);
                v.axpy(-coeff, &qi, 1.0);
            }
        }
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateFrame {
                sigma_min: norm,
                tol,
            });
        }
        q.set_column(j, &(v / norm));
    }
    Ok(q)
}

/// The map `x ↦ T x + x0` with `T` orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanMotion {
    t: Matrix,
    x0: Vector,
}

impl EuclideanMotion {
    pub fn new(t: Matrix, x0: Vector) -> Result<Self> {
        let n = x0.len();
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::Dimension(format!(
                "motion linear part is {}x{}, translation has length {n}",
                t.nrows(),
                t.ncols()
            )));
        }
        let defect = orthogonality_defect(&t);
        if !(defect <= ORTHO_TOLERANCE) {
            return Err(Error::InvalidConfig(format!(
                "linear part is not orthogonal (max |TᵀT - I| = {defect:e})"
            )));
        }
        Ok(Self { t, x0 })
    }

    /// Builds a motion from a linear part that is only approximately
    /// orthogonal, re-orthonormalizing its columns first.
    pub fn from_frame(t: &Matrix, x0: Vector) -> Result<Self> {
        let cols: Vec<Vector> = t.column_iter().map(|c| c.into_owned()).collect();
        let q = gram_schmidt(&cols)?;
        Self::new(q, x0)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            t: Matrix::identity(n, n),
            x0: Vector::zeros(n),
        }
    }

    pub fn translation(u: Vector) -> Self {
        let n = u.len();
        Self {
            t: Matrix::identity(n, n),
            x0: u,
        }
    }

    /// Rotation by `theta` in the plane of coordinates `(i, j)`.
    pub fn plane_rotation(n: usize, i: usize, j: usize, theta: f64) -> Self {
        let mut t = Matrix::identity(n, n);
        let (s, c) = theta.sin_cos();
        t[(i, i)] = c;
        t[(i, j)] = -s;
        t[(j, i)] = s;
        t[(j, j)] = c;
        Self {
            t,
            x0: Vector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn linear(&self) -> &Matrix {
        &self.t
    }

    pub fn offset(&self) -> &Vector {
        &self.x0
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.t * x + &self.x0
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &EuclideanMotion) -> EuclideanMotion {
        EuclideanMotion {
            t: &self.t * &other.t,
            x0: &self.t * &other.x0 + &self.x0,
        }
    }

    pub fn inverse(&self) -> EuclideanMotion {
        let tt = self.t.transpose();
        let x0 = -(&tt * &self.x0);
        EuclideanMotion { t: tt, x0 }
    }

    pub fn determinant(&self) -> f64 {
        self.t.determinant()
    }

    pub fn is_proper(&self) -> bool {
        self.determinant() > 0.0
    }

    pub fn to_record(&self) -> MotionRecord {
        MotionRecord {
            linear: rows_of(&self.t),
            offset: self.x0.iter().copied().collect(),
        }
    }
}

/// Serialized form of a motion: row-major linear part plus translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub linear: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl MotionRecord {
    pub fn to_motion(&self) -> Result<EuclideanMotion> {
        let t = matrix_from_rows(&self.linear)?;
        EuclideanMotion::new(t, vector(&self.offset))
    }
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Closed ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("ball center must be finite".into()));
        }
        Ok(Self {
            center: center.iter().copied().collect(),
            radius,
        })
    }

    pub fn center(&self) -> Vector {
        vector(&self.center)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Distance from `x` to the ball (zero inside).
    pub fn distance(&self, x: &Vector) -> f64 {
        (self.center_distance(x) - self.radius).max(0.0)
    }

    pub fn center_distance(&self, x: &Vector) -> f64 {
        self.center
            .iter()
            .zip(x.iter())
            .map(|(c, v)| (v - c) * (v - c))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains_ball(&self, other: &Ball) -> bool {
        self.center_distance(&other.center()) + other.radius <= self.radius * (1.0 + 1e-12)
    }
}

/// `l`-dimensional volume of the simplex spanned by `points` (`l + 1` of them),
/// from the Gram determinant of the edge vectors out of `points[0]`, taken as
/// `∏ R_ii²` of their QR factorization to avoid cancellation on thin simplices.
pub fn simplex_volume(points: &[Vector]) -> Result<f64> {
    let Some(base) = points.first() else {
        return Err(Error::Dimension("simplex needs at least one vertex".into()));
    };
    let n = base.len();
    let l = points.len() - 1;
    if l > n {
        return Err(Error::Dimension(format!(
            "{l}-simplex does not fit in R^{n}"
        )));
    }
    if points.iter().any(|p| p.len() != n) {
        return Err(Error::Dimension(
            "simplex vertices of mixed dimension".into(),
        ));
    }
    if l == 0 {
        return Ok(1.0);
    }
    let edges = Matrix::from_fn(n, l, |i, j| points[j + 1][i] - base[i]);
    let r = edges.qr().r();
    let root_det: f64 = r.diagonal().iter().map(|d| d.abs()).product();
    let factorial: f64 = (1..=l).map(|k| k as f64).product();
    Ok(root_det / factorial)
}

/// Signed `n`-volume scaled by `n!`: the determinant of the edge matrix of an
/// `n`-simplex in `R^n`.
pub fn oriented_edge_determinant(points: &[Vector]) -> Result<f64> {
    let n = points.first().map_or(0, |p| p.len());
    if points.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "oriented volume needs {} vertices in R^{n}, got {}",
            n + 1,
            points.len()
        )));
    }
    let base = &points[0];
    let edges = Matrix::from_fn(n, n, |i, j| points[j + 1][i] - base[i]);
    Ok(edges.determinant())
}
