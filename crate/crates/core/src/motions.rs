//! Local Euclidean motions fitted to `φ` on interior balls, their assignment
//! to Whitney cubes, and the mutual-consistency diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compact_set::BallUnionSet;
use crate::error::Result;
use crate::geometry::{gram_schmidt, op_norm, Ball, EuclideanMotion, MotionRecord, Vector};
use crate::sampling::{in_ball, in_dilated_cube, rng_for};
use crate::source_maps::SmoothMap;
use crate::whitney::{CubeCase, RegularizedDistance, WhitneyDecomposition};

/// Fits `A(x) = φ(z) + T (x - z)` on `B(z, r)`, with `T` the Gram–Schmidt
/// orthonormalization of the difference quotients `(φ(z + r e_i) - φ(z)) / r`.
pub fn fit_local_motion<M: SmoothMap + ?Sized>(phi: &M, ball: &Ball) -> Result<EuclideanMotion> {
    let z = ball.center();
    let r = ball.radius;
    let base = phi.eval(&z);
    let frame: Vec<Vector> = (0..z.len())
        .map(|i| {
            let mut probe = z.clone();
            probe[i] += r;
            (phi.eval(&probe) - &base) / r
        })
        .collect();
    let t = gram_schmidt(&frame)?;
    let x0 = base - &t * &z;
    EuclideanMotion::new(t, x0)
}

/// Sampled sup of `|φ(y) - A(y)|` over `y ∈ B(z, K r) ∩ E`.
pub fn fit_residual<M: SmoothMap + ?Sized, R: Rng + ?Sized>(
    phi: &M,
    motion: &EuclideanMotion,
    ball: &Ball,
    k: f64,
    set: &BallUnionSet,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut sup: f64 = 0.0;
    let mut taken = 0;
    let mut attempts = 0;
    while taken < samples && attempts < samples * 1000 {
        attempts += 1;
        let y = in_ball(rng, &ball.center(), k * ball.radius);
        if !set.contains(&y) {
            continue;
        }
        taken += 1;
        sup = sup.max((phi.eval(&y) - motion.apply(&y)).norm());
    }
    sup
}

/// Motions attached to the cubes of a decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionAssignment {
    /// Distinct motions; entry 0 is `A_∞`.
    motions: Vec<EuclideanMotion>,
    /// For each input ball of `E`, its fitted motion's slot, if fitted.
    ball_slot: Vec<Option<usize>>,
    /// For each cube, its motion's slot.
    cube_slot: Vec<usize>,
    /// Sampled sup over `E` of `|φ - A_∞|`.
    anchor_residual: f64,
}

const STREAM_ANCHOR_RESIDUAL: u64 = 31;
const STREAM_OVERLAP: u64 = 32;
const STREAM_NEAR: u64 = 33;

impl MotionAssignment {
    /// Small cubes get the motion fitted on their own ball (shared between
    /// cubes with the same ball); all other cubes get `A_∞`, fitted on the
    /// anchor ball.
    pub fn pick<M: SmoothMap + ?Sized>(
        decomp: &WhitneyDecomposition,
        phi: &M,
        residual_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let set = decomp.set();
        let anchor = decomp.anchor();
        let mut motions = vec![fit_local_motion(phi, &anchor.ball)?];
        let mut ball_slot = vec![None; set.balls().len()];
        ball_slot[anchor.ball_index] = Some(0);
        let mut cube_slot = Vec::with_capacity(decomp.cubes().len());
        for q in decomp.cubes() {
            let slot = match (q.case, q.ball) {
                (CubeCase::SmallCube, Some(b)) => match ball_slot[b] {
                    Some(s) => s,
                    None => {
                        motions.push(fit_local_motion(phi, &set.balls()[b])?);
                        ball_slot[b] = Some(motions.len() - 1);
                        motions.len() - 1
                    }
                },
                _ => 0,
            };
            cube_slot.push(slot);
        }
        let mut rng = rng_for(seed, STREAM_ANCHOR_RESIDUAL);
        let mut anchor_residual: f64 = 0.0;
        for _ in 0..residual_samples {
            let y = set.sample_point(&mut rng);
            anchor_residual = anchor_residual.max((phi.eval(&y) - motions[0].apply(&y)).norm());
        }
        Ok(Self {
            motions,
            ball_slot,
            cube_slot,
            anchor_residual,
        })
    }

    pub fn anchor(&self) -> &EuclideanMotion {
        &self.motions[0]
    }

    pub fn for_cube(&self, cube: usize) -> &EuclideanMotion {
        &self.motions[self.cube_slot[cube]]
    }

    /// Slot of a cube's motion; cubes with equal slots share the same motion.
    pub fn slot_of(&self, cube: usize) -> usize {
        self.cube_slot[cube]
    }

    pub fn for_ball(&self, ball: usize) -> Option<&EuclideanMotion> {
        self.ball_slot[ball].map(|s| &self.motions[s])
    }

    pub fn distinct_motions(&self) -> &[EuclideanMotion] {
        &self.motions
    }

    pub fn anchor_residual(&self) -> f64 {
        self.anchor_residual
    }

    pub fn record(&self) -> MotionsRecord {
        MotionsRecord {
            anchor: self.anchor().to_record(),
            fitted_count: self.motions.len(),
            ball_motions: self
                .ball_slot
                .iter()
                .map(|s| s.map(|s| self.motions[s].to_record()))
                .collect(),
            anchor_residual: self.anchor_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionsRecord {
    pub anchor: MotionRecord,
    pub fitted_count: usize,
    pub ball_motions: Vec<Option<MotionRecord>>,
    pub anchor_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Sup of `|A_μ(x) - A_ν(x)| / δ(x)` over sampled overlap points.
    pub sup_value_gap: f64,
    /// Sup of `‖∇A_μ - ∇A_ν‖` over sampled overlapping pairs.
    pub sup_grad_gap: f64,
    /// Sup of `|φ(x) - A_ν(x)| / δ(x)` over sampled `x ∈ Q_ν*`, `δ(x) <= η`.
    pub near_e_value_gap: f64,
    /// Sup of `‖∇φ(x) - ∇A_ν‖` over the same points.
    pub near_e_grad_gap: f64,
    pub overlap_points: usize,
    pub pair_count: usize,
    pub near_points: usize,
    pub seed: u64,
}

/// Samples pairwise overlaps of dilated cubes where the blend is active
/// (`δ > η`, `d < c0`), and points of dilated cubes with `δ <= η`.
pub fn consistency_check<M: SmoothMap + ?Sized>(
    assignment: &MotionAssignment,
    decomp: &WhitneyDecomposition,
    phi: &M,
    rd: &RegularizedDistance,
    samples: usize,
    seed: u64,
) -> ConsistencyReport {
    let set = decomp.set();
    let eta = decomp.eta();
    let c0 = decomp.c0();
    let mut report = ConsistencyReport {
        sup_value_gap: 0.0,
        sup_grad_gap: 0.0,
        near_e_value_gap: 0.0,
        near_e_grad_gap: 0.0,
        overlap_points: 0,
        pair_count: 0,
        near_points: 0,
        seed,
    };
    let cubes = decomp.cubes();
    let blend: Vec<usize> = (0..cubes.len())
        .filter(|&i| cubes[i].dilated_dist_low < c0 && cubes[i].dilated_dist_high > eta)
        .collect();
    if blend.is_empty() || samples == 0 {
        return report;
    }

    let mut rng = rng_for(seed, STREAM_OVERLAP);
    let mut attempts = 0;
    while report.overlap_points < samples && attempts < samples * 100 {
        attempts += 1;
        let nu = blend[rng.gen_range(0..blend.len())];
        let x = in_dilated_cube(&mut rng, &cubes[nu].corner, cubes[nu].side);
        let delta = rd.value(&x);
        if !(delta > eta) || set.distance(&x) >= c0 {
            continue;
        }
        let cover = decomp.covering(&x);
        if cover.len() < 2 {
            continue;
        }
        report.overlap_points += 1;
        for (a, &mu) in cover.iter().enumerate() {
            for &nu in &cover[a + 1..] {
                report.pair_count += 1;
                if assignment.slot_of(mu) == assignment.slot_of(nu) {
                    continue;
                }
                let (am, an) = (assignment.for_cube(mu), assignment.for_cube(nu));
                let gap = (am.apply(&x) - an.apply(&x)).norm() / delta;
                report.sup_value_gap = report.sup_value_gap.max(gap);
                report.sup_grad_gap = report
                    .sup_grad_gap
                    .max(op_norm(&(am.linear() - an.linear())));
            }
        }
    }

    let mut rng = rng_for(seed, STREAM_NEAR);
    let mut attempts = 0;
    while report.near_points < samples && attempts < samples * 100 {
        attempts += 1;
        let nu = blend[rng.gen_range(0..blend.len())];
        let x = in_dilated_cube(&mut rng, &cubes[nu].corner, cubes[nu].side);
        let delta = rd.value(&x);
        if !(delta > 0.0 && delta <= eta) {
            continue;
        }
        report.near_points += 1;
        let a = assignment.for_cube(nu);
        let value_gap = (phi.eval(&x) - a.apply(&x)).norm() / delta;
        let grad_gap = op_norm(&(phi.grad(&x) - a.linear()));
        report.near_e_value_gap = report.near_e_value_gap.max(value_gap);
        report.near_e_grad_gap = report.near_e_grad_gap.max(grad_gap);
    }
    report
}
