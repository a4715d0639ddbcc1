//! Dyadic Whitney decomposition of the complement of `E`, the bump partition
//! of unity subordinate to the dilated cubes, the regularized distance, and
//! the anchor ball.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::compact_set::{BallUnionSet, WitnessLimits};
use crate::error::{Error, Result};
use crate::geometry::{Ball, Vector};
use crate::sampling::{in_dilated_cube, rng_for};
use crate::smooth::plateau;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

/// Default softmin exponent of the regularized distance.
pub const DEFAULT_EXPONENT: u32 = 8;

/// Default cap on the number of cubes a decomposition may emit.
pub const DEFAULT_CUBE_CAP: usize = 1_000_000;

/// Smooth surrogate `δ(x) = (Σ_i h_i(x)^{-p})^{-1/p}` of the distance to `E`,
/// where `h_i` is the distance to ball `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedDistance {
    centers: Vec<Vector>,
    radii: Vec<f64>,
    p: u32,
}

impl RegularizedDistance {
    pub fn new(set: &BallUnionSet, p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig(
                "softmin exponent p must be >= 1".into(),
            ));
        }
        Ok(Self {
            centers: set.balls().iter().map(Ball::center).collect(),
            radii: set.balls().iter().map(|b| b.radius).collect(),
            p,
        })
    }

    pub fn exponent(&self) -> u32 {
        self.p
    }

    pub fn ball_count(&self) -> usize {
        self.radii.len()
    }

    /// `m^{-1/p}`, the lower sandwich constant in `m^{-1/p} d <= δ <= d`.
    pub fn lower_constant(&self) -> f64 {
        (self.ball_count() as f64).powf(-1.0 / self.p as f64)
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.eval(x).0
    }

    /// `(δ(x), ∇δ(x))`; both zero on `E`.
    pub fn eval(&self, x: &Vector) -> (f64, Vector) {
        let n = x.len();
        let m = self.radii.len();
        let mut offsets = Vec::with_capacity(m);
        let mut h_min = f64::INFINITY;
        for (z, &r) in self.centers.iter().zip(&self.radii) {
            let v = x - z;
            let len = v.norm();
            let h = len - r;
            if h <= 0.0 {
                return (0.0, Vector::zeros(n));
            }
            h_min = h_min.min(h);
            offsets.push((v, len, h));
        }
        let p = self.p as i32;
        let sum: f64 = offsets.iter().map(|(_, _, h)| (h_min / h).powi(p)).sum();
        let delta = h_min * sum.powf(-1.0 / self.p as f64);
        let mut grad = Vector::zeros(n);
        for (v, len, h) in &offsets {
            let w = (delta / h).powi(p + 1);
            grad.axpy(w / len, v, 1.0);
        }
        (delta, grad)
    }
}

/// Which construction supplies the motion of a cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeCase {
    /// `δ_ν <= c3`: motion fitted on the cube's own interior ball.
    SmallCube,
    /// `δ_ν > c3`: the cube uses the anchor motion.
    NotSoSmall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicCube {
    pub level: u32,
    pub index: [i64; MAX_DIM],
    pub corner: Vec<f64>,
    pub side: f64,
    /// `dist(Q, E)`.
    pub dist: f64,
    /// Exact `dist(Q*, E)`.
    pub dilated_dist_low: f64,
    /// Upper bound on `sup_{Q*} d`.
    pub dilated_dist_high: f64,
    pub case: CubeCase,
    /// Input ball of `E` assigned to a small cube.
    pub ball: Option<usize>,
}

impl DyadicCube {
    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn diameter(&self) -> f64 {
        self.side * (self.dim() as f64).sqrt()
    }

    pub fn center(&self) -> Vector {
        Vector::from_fn(self.dim(), |k, _| self.corner[k] + 0.5 * self.side)
    }

    /// Bounds `(lo, hi)` of the 3x dilation `Q*`.
    pub fn dilated_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.corner.iter().map(|c| c - self.side).collect();
        let hi = self.corner.iter().map(|c| c + 2.0 * self.side).collect();
        (lo, hi)
    }

    pub fn dilation_contains(&self, x: &Vector) -> bool {
        self.corner
            .iter()
            .zip(x.iter())
            .all(|(&c, &v)| v >= c - self.side && v <= c + 2.0 * self.side)
    }

    /// Half-open membership `x ∈ corner + [0, δ)^n`.
    pub fn contains(&self, x: &Vector) -> bool {
        self.corner
            .iter()
            .zip(x.iter())
            .all(|(&c, &v)| v >= c && v < c + self.side)
    }

    /// `ψ_ν(x)`: product of plateaus, 1 on `Q`, supported in `Q*`.
    pub fn bump(&self, x: &Vector) -> (f64, Vector) {
        let n = self.dim();
        let mut vals = [0.0; MAX_DIM];
        let mut ders = [0.0; MAX_DIM];
        for k in 0..n {
            let (v, d) = plateau((x[k] - self.corner[k]) / self.side);
            vals[k] = v;
            ders[k] = d / self.side;
        }
        let value: f64 = vals[..n].iter().product();
        let grad = Vector::from_fn(n, |k, _| {
            let rest: f64 = (0..n).filter(|&j| j != k).map(|j| vals[j]).product();
            ders[k] * rest
        });
        (value, grad)
    }
}

/// One term `Θ_ν` of the partition of unity at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTerm {
    pub cube: usize,
    pub value: f64,
    pub grad: Vector,
}

/// The anchor ball and the point it was found from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub point: Vec<f64>,
    pub ball_index: usize,
    pub ball: Ball,
    /// Realized `C` in `E ⊂ B(z_∞, C r_∞)`.
    pub containment: f64,
}

/// Summary constants of a decomposition, as serialized in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionStats {
    pub cube_count: usize,
    pub small_cube_count: usize,
    pub pruned_count: usize,
    pub finest_level: u32,
    pub root_half_width: f64,
    pub pruning_floor: f64,
    pub c_low: f64,
    #[serde(rename = "C_high")]
    pub c_high: f64,
    pub c3: f64,
    #[serde(rename = "K_ov")]
    pub k_ov: usize,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionConfig {
    pub c0: f64,
    pub eta: f64,
    pub cube_cap: usize,
    pub limits: WitnessLimits,
}

type CellKey = (u32, [i64; MAX_DIM]);

#[derive(Debug, Clone)]
pub struct WhitneyDecomposition {
    set: BallUnionSet,
    cubes: Vec<DyadicCube>,
    lookup: HashMap<CellKey, usize>,
    /// Levels that hold at least one cube, ascending.
    levels: Vec<u32>,
    half_width: f64,
    pruned: Vec<DyadicCube>,
    c0: f64,
    eta: f64,
    c_low: f64,
    c_high: f64,
    c3: f64,
    k_ov: usize,
    anchor: Anchor,
}

impl WhitneyDecomposition {
    /// Subdivides `[-L, L]^n` dyadically. A cube is accepted when
    /// `diam Q <= dist(Q, E) <= 4 diam Q`, split when `dist(Q, E) < diam Q`,
    /// and discarded when `d <= η` on all of `Q*`.
    pub fn build(set: &BallUnionSet, config: &DecompositionConfig) -> Result<Self> {
        let n = set.dim();
        let DecompositionConfig {
            c0,
            eta,
            cube_cap,
            limits,
        } = *config;
        if n > MAX_DIM {
            return Err(Error::Dimension(format!("dimension {n} exceeds {MAX_DIM}")));
        }
        if !(c0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c0 must be positive, got {c0}"
            )));
        }
        if !(eta > 0.0 && eta < c0 / 8.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in (0, c0/8) = (0, {}), got {eta}",
                c0 / 8.0
            )));
        }
        let half_width = set.sup_norm_extent() + c0 + 2.0;
        let sqrt_n = (n as f64).sqrt();

        let mut cubes = Vec::new();
        let mut pruned = Vec::new();
        let mut stack = vec![(0u32, [0i64; MAX_DIM])];
        while let Some((level, index)) = stack.pop() {
            let side = 2.0 * half_width / (1u64 << level) as f64;
            let corner: Vec<f64> = (0..n)
                .map(|k| -half_width + index[k] as f64 * side)
                .collect();
            let upper: Vec<f64> = corner.iter().map(|c| c + side).collect();
            let dist = set.distance_to_box(&corner, &upper);
            let mut cube = DyadicCube {
                level,
                index,
                corner,
                side,
                dist,
                dilated_dist_low: 0.0,
                dilated_dist_high: 0.0,
                case: CubeCase::NotSoSmall,
                ball: None,
            };
            let (lo, hi) = cube.dilated_bounds();
            cube.dilated_dist_high = set.distance_upper_bound_on_box(&lo, &hi);
            if cube.dilated_dist_high <= eta {
                pruned.push(cube);
                continue;
            }
            if dist < side * sqrt_n {
                if level >= 62 {
                    return Err(Error::InvalidConfig(
                        "dyadic subdivision exceeded 62 levels".into(),
                    ));
                }
                // Reverse order so children pop lexicographically.
                for bits in (0..1u32 << n).rev() {
                    let mut child = [0i64; MAX_DIM];
                    for k in 0..n {
                        child[k] = 2 * index[k] + ((bits >> (n - 1 - k)) & 1) as i64;
                    }
                    stack.push((level + 1, child));
                }
            } else {
                cube.dilated_dist_low = set.distance_to_box(&lo, &hi);
                cubes.push(cube);
            }
            if cubes.len() + stack.len() > cube_cap {
                return Err(Error::BudgetExceeded { cap: cube_cap });
            }
        }

        let mut c_low = f64::INFINITY;
        let mut c_high: f64 = 0.0;
        for q in &cubes {
            c_low = c_low.min(q.dilated_dist_low / q.side);
            c_high = c_high.max(q.dilated_dist_high / q.side);
        }
        let c3 = c0 / c_high;
        for q in cubes.iter_mut() {
            if q.side <= c3 {
                let w = set.interior_ball_query(&q.center(), c0, &limits)?;
                q.case = CubeCase::SmallCube;
                q.ball = Some(w.index);
            }
        }

        let lookup: HashMap<CellKey, usize> = cubes
            .iter()
            .enumerate()
            .map(|(i, q)| ((q.level, q.index), i))
            .collect();
        let mut levels: Vec<u32> = cubes.iter().map(|q| q.level).collect();
        levels.sort_unstable();
        levels.dedup();

        let anchor = find_anchor_ball(set, c0, &limits)?;
        let mut decomp = Self {
            set: set.clone(),
            cubes,
            lookup,
            levels,
            half_width,
            pruned,
            c0,
            eta,
            c_low,
            c_high,
            c3,
            k_ov: 0,
            anchor,
        };
        decomp.k_ov = decomp.overlap_counts().into_iter().max().unwrap_or(0);
        Ok(decomp)
    }

    pub fn set(&self) -> &BallUnionSet {
        &self.set
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn pruned_cubes(&self) -> &[DyadicCube] {
        &self.pruned
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn c_low(&self) -> f64 {
        self.c_low
    }

    pub fn c_high(&self) -> f64 {
        self.c_high
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    pub fn k_ov(&self) -> usize {
        self.k_ov
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    pub fn in_root_box(&self, x: &Vector) -> bool {
        x.iter().all(|v| v.abs() <= self.half_width)
    }

    pub fn stats(&self) -> DecompositionStats {
        DecompositionStats {
            cube_count: self.cubes.len(),
            small_cube_count: self
                .cubes
                .iter()
                .filter(|q| q.case == CubeCase::SmallCube)
                .count(),
            pruned_count: self.pruned.len(),
            finest_level: self.levels.last().copied().unwrap_or(0),
            root_half_width: self.half_width,
            pruning_floor: self.eta,
            c_low: self.c_low,
            c_high: self.c_high,
            c3: self.c3,
            k_ov: self.k_ov,
            anchor: self.anchor.clone(),
        }
    }

    fn side_at(&self, level: u32) -> f64 {
        2.0 * self.half_width / (1u64 << level) as f64
    }

    /// Calls `visit` for every cube at `level` whose index lies in the box
    /// `[lo_k, hi_k]` per axis.
    fn for_each_in_range(
        &self,
        level: u32,
        lo: &[i64; MAX_DIM],
        hi: &[i64; MAX_DIM],
        visit: &mut impl FnMut(usize),
    ) {
        let n = self.set.dim();
        if (0..n).any(|k| lo[k] > hi[k]) {
            return;
        }
        let mut idx = *lo;
        loop {
            if let Some(&i) = self.lookup.get(&(level, idx)) {
                visit(i);
            }
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if idx[k] < hi[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = lo[k];
            }
        }
    }

    /// Indices of cubes whose dilation contains `x`, ascending.
    pub fn covering(&self, x: &Vector) -> Vec<usize> {
        let n = self.set.dim();
        let mut out = Vec::new();
        if !self.in_root_box(x) {
            return out;
        }
        let d = self.set.distance(x);
        for &level in &self.levels {
            let side = self.side_at(level);
            // A cube whose dilation holds x has d(x) <= C_high side.
            if d > self.c_high * side * (1.0 + 1e-12) {
                continue;
            }
            let mut lo = [0i64; MAX_DIM];
            let mut hi = [0i64; MAX_DIM];
            for k in 0..n {
                let u = (x[k] + self.half_width) / side;
                lo[k] = (u - 2.0).ceil() as i64;
                hi[k] = (u + 1.0).floor() as i64;
            }
            self.for_each_in_range(level, &lo, &hi, &mut |i| {
                if self.cubes[i].dilation_contains(x) {
                    out.push(i);
                }
            });
        }
        out.sort_unstable();
        out
    }

    /// The cube containing `x` under the half-open convention, if any.
    pub fn locate(&self, x: &Vector) -> Option<usize> {
        self.covering(x)
            .into_iter()
            .find(|&i| self.cubes[i].contains(x))
    }

    /// All nonzero `Θ_ν(x) = ψ_ν / Σ_μ ψ_μ` with gradients. Empty when no
    /// accepted cube covers `x`.
    pub fn partition(&self, x: &Vector) -> Vec<PartitionTerm> {
        let n = self.set.dim();
        let mut terms: Vec<(usize, f64, Vector)> = Vec::new();
        for i in self.covering(x) {
            let (v, g) = self.cubes[i].bump(x);
            if v > 0.0 {
                terms.push((i, v, g));
            }
        }
        let total: f64 = terms.iter().map(|t| t.1).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        let mut total_grad = Vector::zeros(n);
        for (_, _, g) in &terms {
            total_grad += g;
        }
        terms
            .into_iter()
            .map(|(cube, v, g)| {
                let value = v / total;
                let grad = (g - &total_grad * value) / total;
                PartitionTerm { cube, value, grad }
            })
            .collect()
    }

    /// `(Θ_ν(x), ∇Θ_ν(x))`, zero outside `Q_ν*`.
    pub fn theta(&self, cube: usize, x: &Vector) -> (f64, Vector) {
        self.partition(x)
            .into_iter()
            .find(|t| t.cube == cube)
            .map_or_else(|| (0.0, Vector::zeros(x.len())), |t| (t.value, t.grad))
    }

    /// For each cube, the number of cubes (itself included) whose dilation
    /// meets its dilation.
    pub fn overlap_counts(&self) -> Vec<usize> {
        let n = self.set.dim();
        let mut counts = vec![1usize; self.cubes.len()];
        for (nu, q) in self.cubes.iter().enumerate() {
            let (a, b) = q.dilated_bounds();
            for &level in self.levels.iter().filter(|&&l| l <= q.level) {
                let side = self.side_at(level);
                let mut lo = [0i64; MAX_DIM];
                let mut hi = [0i64; MAX_DIM];
                for k in 0..n {
                    lo[k] = ((a[k] + self.half_width) / side - 2.0).ceil() as i64;
                    hi[k] = ((b[k] + self.half_width) / side + 1.0).floor() as i64;
                }
                self.for_each_in_range(level, &lo, &hi, &mut |mu| {
                    let other = &self.cubes[mu];
                    let coarser = other.level < q.level || (other.level == q.level && mu < nu);
                    if coarser && dilations_meet(q, other) {
                        counts[nu] += 1;
                        counts[mu] += 1;
                    }
                });
            }
        }
        counts
    }

    /// Realized constants of the per-cube balls, sampled at `samples` points
    /// of dilated small cubes.
    pub fn ball_constants(
        &self,
        rd: &RegularizedDistance,
        samples: usize,
        seed: u64,
    ) -> BallConstants {
        let small: Vec<usize> = (0..self.cubes.len())
            .filter(|&i| self.cubes[i].ball.is_some())
            .collect();
        let mut out = BallConstants {
            containment: 0.0,
            radius_over_delta_min: f64::INFINITY,
            radius_over_delta_max: 0.0,
            center_offset_over_delta_max: 0.0,
            neighbor_containment: 0.0,
            sample_count: 0,
        };
        if small.is_empty() {
            out.radius_over_delta_min = 0.0;
            return out;
        }
        for &i in &small {
            let q = &self.cubes[i];
            let ball = &self.set.balls()[q.ball.expect("small cube has a ball")];
            let (lo, hi) = q.dilated_bounds();
            let far = (0..q.dim())
                .map(|k| {
                    let e = (ball.center[k] - lo[k])
                        .abs()
                        .max((hi[k] - ball.center[k]).abs());
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            out.containment = out.containment.max(far / ball.radius);
        }
        let mut rng = rng_for(seed, STREAM_BALLS);
        for s in 0..samples {
            let i = small[s % small.len()];
            let q = &self.cubes[i];
            let x = in_dilated_cube(&mut rng, &q.corner, q.side);
            let delta = rd.value(&x);
            if delta <= 0.0 {
                continue;
            }
            out.sample_count += 1;
            let ball = &self.set.balls()[q.ball.expect("small cube has a ball")];
            out.radius_over_delta_min = out.radius_over_delta_min.min(ball.radius / delta);
            out.radius_over_delta_max = out.radius_over_delta_max.max(ball.radius / delta);
            out.center_offset_over_delta_max = out
                .center_offset_over_delta_max
                .max(ball.center_distance(&x) / delta);
            for mu in self.covering(&x) {
                if let Some(b) = self.cubes[mu].ball {
                    let other = &self.set.balls()[b];
                    let reach = other.center_distance(&ball.center()) + ball.radius;
                    out.neighbor_containment = out.neighbor_containment.max(reach / other.radius);
                }
            }
        }
        out
    }
}

const STREAM_BALLS: u64 = 21;

/// Realized constants relating cube balls to the regularized distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConstants {
    /// `C` in `Q_ν* ⊂ B(z_ν, C r_ν)`.
    pub containment: f64,
    pub radius_over_delta_min: f64,
    pub radius_over_delta_max: f64,
    pub center_offset_over_delta_max: f64,
    /// `C` in `B(z_ν, r_ν) ⊂ B(z_μ, C r_μ)` for overlapping small cubes.
    pub neighbor_containment: f64,
    pub sample_count: usize,
}

fn dilations_meet(a: &DyadicCube, b: &DyadicCube) -> bool {
    (0..a.dim()).all(|k| {
        let (alo, ahi) = (a.corner[k] - a.side, a.corner[k] + 2.0 * a.side);
        let (blo, bhi) = (b.corner[k] - b.side, b.corner[k] + 2.0 * b.side);
        alo <= bhi && blo <= ahi
    })
}

/// Finds `x*` with `d(x*) = c0/2` on the ray from the centroid of `E` through
/// the center of its largest ball, and returns the interior ball at `x*`.
pub fn find_anchor_ball(set: &BallUnionSet, c0: f64, limits: &WitnessLimits) -> Result<Anchor> {
    let n = set.dim();
    let (_, big) = set
        .balls()
        .iter()
        .enumerate()
        .fold(None::<(usize, &Ball)>, |best, (i, b)| match best {
            Some((_, bb)) if bb.radius >= b.radius => best,
            _ => Some((i, b)),
        })
        .expect("E is nonempty");
    let start = big.center();
    let mut dir = &start - set.centroid();
    if dir.norm() < 1e-12 {
        dir = Vector::zeros(n);
        dir[0] = 1.0;
    }
    dir /= dir.norm();
    let target = 0.5 * c0;
    let along = |t: f64| &start + &dir * t;
    let mut lo = big.radius;
    let mut hi = big.radius + target;
    while set.distance(&along(hi)) < target {
        lo = hi;
        hi *= 2.0;
    }
    let mut point = along(hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        point = along(mid);
        let d = set.distance(&point);
        if (d - target).abs() <= 1e-10 {
            break;
        }
        if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = set.interior_ball_query(&point, c0, limits)?;
    let ball = w.ball;
    let containment = set
        .balls()
        .iter()
        .map(|b| b.center_distance(&ball.center()) + b.radius)
        .fold(0.0, f64::max)
        / ball.radius;
    Ok(Anchor {
        point: point.iter().copied().collect(),
        ball_index: w.index,
        ball,
        containment,
    })
}
