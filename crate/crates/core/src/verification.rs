//! Numerical checks of a built extension: distortion of `∇Φ`, chordwise
//! bi-Lipschitz ratios, exactness near `E` and far from it, injectivity on a
//! grid, finite-difference gradients and inversion round trips.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::extension::{ExtensionStructure, Region};
use crate::geometry::{op_norm, spectral_distortion, Matrix, Vector};
use crate::sampling::{in_box, rng_for, SampleRng};
use crate::smooth::PLATEAU_BREAKS;
use crate::source_maps::SmoothMap;

const STREAM_SPECTRUM: u64 = 41;
const STREAM_BILIPSCHITZ: u64 = 42;
const STREAM_FIELDS: u64 = 43;
const STREAM_FD: u64 = 44;
const STREAM_ROUNDTRIP: u64 = 45;
const STREAM_PARTITION: u64 = 46;
const STREAM_GRADIENT_GAPS: u64 = 47;

/// Draws up to `count` normalized-coordinate points of one region by
/// rejection from a box around it.
pub fn stratum_points(
    ext: &ExtensionStructure,
    region: Region,
    count: usize,
    rng: &mut SampleRng,
) -> Vec<Vector> {
    let set = ext.normalized_set();
    let (lo, hi) = set.bounding_box();
    let reach = match region {
        Region::Near => ext.eta() / ext.regularized_distance().lower_constant(),
        Region::Blend => ext.c0(),
        Region::Far => 0.0,
    };
    let (lo, hi) = if region == Region::Far {
        let l = ext.decomposition().half_width() + 1.0;
        (
            Vector::from_element(lo.len(), -l),
            Vector::from_element(lo.len(), l),
        )
    } else {
        (lo.add_scalar(-reach), hi.add_scalar(reach))
    };
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < count.saturating_mul(100_000).max(1) {
        attempts += 1;
        let x = in_box(rng, &lo, &hi);
        if ext.region_normalized(&x) == region {
            out.push(x);
        }
    }
    out
}

/// Stratified sample: a third of `count` from each region.
pub fn stratified_points(
    ext: &ExtensionStructure,
    count: usize,
    rng: &mut SampleRng,
) -> Vec<Vector> {
    let per = count.div_ceil(3);
    let mut out = Vec::with_capacity(3 * per);
    for region in [Region::Near, Region::Blend, Region::Far] {
        out.extend(stratum_points(ext, region, per, rng));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub sup: f64,
    pub near: f64,
    pub blend: f64,
    pub far: f64,
    pub sample_count: usize,
}

/// Sup over stratified samples of `max(σ_max - 1, 1 - σ_min)` of `∇Φ`.
pub fn distortion_spectrum_report(
    ext: &ExtensionStructure,
    samples: usize,
    seed: u64,
) -> SpectrumReport {
    let mut rng = rng_for(seed, STREAM_SPECTRUM);
    let mut report = SpectrumReport {
        sup: 0.0,
        near: 0.0,
        blend: 0.0,
        far: 0.0,
        sample_count: 0,
    };
    let per = samples.div_ceil(3);
    for region in [Region::Near, Region::Blend, Region::Far] {
        let pts = stratum_points(ext, region, per, &mut rng);
        report.sample_count += pts.len();
        let sup = pts
            .par_iter()
            .map(|x| spectral_distortion(&ext.grad_normalized(x)))
            .reduce(|| 0.0, f64::max);
        match region {
            Region::Near => report.near = sup,
            Region::Blend => report.blend = sup,
            Region::Far => report.far = sup,
        }
        report.sup = report.sup.max(sup);
    }
    report
}

/// Sup of `| |Φx - Φy| / |x - y| - 1 |` over pairs drawn from the strata:
/// half the pairs are short (offset up to `0.1`), half join two samples.
pub fn bilipschitz_report(ext: &ExtensionStructure, pairs: usize, seed: u64) -> f64 {
    let mut rng = rng_for(seed, STREAM_BILIPSCHITZ);
    let pts = stratified_points(ext, pairs, &mut rng);
    if pts.len() < 2 {
        return 0.0;
    }
    let n = ext.dim();
    let list: Vec<(Vector, Vector)> = pts
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let y = if i % 2 == 0 {
                let r = 0.1 * rng.gen::<f64>();
                x + crate::sampling::unit_direction(&mut rng, n) * r
            } else {
                pts[rng.gen_range(0..pts.len())].clone()
            };
            (x.clone(), y)
        })
        .collect();
    list.par_iter()
        .map(|(x, y)| {
            let gap = (x - y).norm();
            if gap < 1e-9 {
                return 0.0;
            }
            let ratio = (ext.eval_normalized(x) - ext.eval_normalized(y)).norm() / gap;
            (ratio - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// `(max |Φ - A_∞|` over `d >= c0`, `max |Φ - φ|` over `δ <= η)`, measured
/// in the caller's coordinates.
pub fn far_near_field_checks(ext: &ExtensionStructure, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_for(seed, STREAM_FIELDS);
    let frame = ext.frame();
    let far_pts = stratum_points(ext, Region::Far, samples, &mut rng);
    let near_pts = stratum_points(ext, Region::Near, samples, &mut rng);
    let anchor = ext.anchor_motion();
    let phi = &ext.phi().map;
    let far = far_pts
        .par_iter()
        .map(|xn| {
            let x = frame.invert(xn);
            (ext.eval(&x) - anchor.apply(&x)).amax()
        })
        .reduce(|| 0.0, f64::max);
    let near = near_pts
        .par_iter()
        .map(|xn| {
            let x = frame.invert(xn);
            (ext.eval(&x) - phi.eval(&x)).amax()
        })
        .reduce(|| 0.0, f64::max);
    (far, near)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub collisions: usize,
    /// `+1` or `-1` when the sign of `det ∇Φ` is constant, `0` otherwise.
    pub det_sign: i32,
    pub grid_resolution: usize,
    /// Largest distortion of `∇Φ` seen on the grid.
    pub grid_distortion: f64,
}

/// Evaluates `Φ` on a `g^n` grid over the root box and looks for pairs of
/// non-adjacent nodes whose images are closer than `(1 - 2D)` times their
/// distance, with `D` the grid distortion.
pub fn injectivity_probe(ext: &ExtensionStructure, grid_resolution: usize) -> InjectivityReport {
    let n = ext.dim();
    let g = grid_resolution.max(2);
    let half = ext.decomposition().half_width();
    let h = 2.0 * half / (g - 1) as f64;
    let total = g.pow(n as u32);
    let node = |mut i: usize| -> Vec<i64> {
        let mut idx = vec![0i64; n];
        for k in (0..n).rev() {
            idx[k] = (i % g) as i64;
            i /= g;
        }
        idx
    };
    let evals: Vec<(Vector, f64, f64)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let idx = node(i);
            let x = Vector::from_fn(n, |k, _| -half + idx[k] as f64 * h);
            let (y, grad, _) = ext.eval_grad_normalized(&x, true);
            let grad = grad.expect("gradient requested");
            (y, grad.determinant(), spectral_distortion(&grad))
        })
        .collect();
    let distortion = evals.iter().fold(0.0f64, |m, e| m.max(e.2));
    let factor = (1.0 - 2.0 * distortion).max(1e-6);
    let cell = factor * h;

    let positive = evals.iter().all(|e| e.1 > 0.0);
    let negative = evals.iter().all(|e| e.1 < 0.0);
    let det_sign = if positive {
        1
    } else if negative {
        -1
    } else {
        0
    };

    let key = |y: &Vector| -> Vec<i64> { y.iter().map(|v| (v / cell).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, e) in evals.iter().enumerate() {
        buckets.entry(key(&e.0)).or_default().push(i);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let mut collisions = 0;
    for (i, e) in evals.iter().enumerate() {
        let base = key(&e.0);
        let ii = node(i);
        for off in &offsets {
            let probe: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
            let Some(bucket) = buckets.get(&probe) else {
                continue;
            };
            for &j in bucket {
                if j <= i {
                    continue;
                }
                let jj = node(j);
                let cheb = ii
                    .iter()
                    .zip(&jj)
                    .map(|(a, b)| (a - b).abs())
                    .max()
                    .unwrap_or(0);
                if cheb <= 1 {
                    continue;
                }
                let pre = h * ii
                    .iter()
                    .zip(&jj)
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if (&e.0 - &evals[j].0).norm() < factor * pre {
                    collisions += 1;
                }
            }
        }
    }
    InjectivityReport {
        collisions,
        det_sign,
        grid_resolution: g,
        grid_distortion: distortion,
    }
}

/// Whether `x` (normalized) lies within `margin` of a place where `Φ` switches
/// analytic piece.
pub fn near_breakpoint(ext: &ExtensionStructure, x: &Vector, margin: f64) -> bool {
    let decomp = ext.decomposition();
    let eta = ext.eta();
    let delta = ext.regularized_distance().value(x);
    if (delta - eta).abs() < margin || (delta - 2.0 * eta).abs() < margin {
        return true;
    }
    if (ext.normalized_set().distance(x) - ext.c0()).abs() < margin {
        return true;
    }
    let half = decomp.half_width();
    if x.iter().any(|v| (v.abs() - half).abs() < margin) {
        return true;
    }
    decomp.covering(x).into_iter().any(|i| {
        let q = &decomp.cubes()[i];
        (0..x.len()).any(|k| {
            PLATEAU_BREAKS
                .iter()
                .any(|b| (x[k] - (q.corner[k] + b * q.side)).abs() < margin)
        })
    })
}

/// Central-difference Jacobian with step `h`.
pub fn central_difference<F: Fn(&Vector) -> Vector>(f: F, x: &Vector, h: f64) -> Matrix {
    let n = x.len();
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        g.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_rel_err: f64,
    pub points: usize,
    pub skipped: usize,
}

/// Analytic `∇Φ` against central differences (step `1e-5`) at stratified
/// points, skipping those within `1e-4` of a breakpoint.
pub fn fd_gradient_check(ext: &ExtensionStructure, points: usize, seed: u64) -> GradientCheck {
    const STEP: f64 = 1e-5;
    const MARGIN: f64 = 1e-4;
    let mut rng = rng_for(seed, STREAM_FD);
    let mut kept = Vec::with_capacity(points);
    let mut skipped = 0;
    let mut rounds = 0;
    while kept.len() < points && rounds < 100 {
        rounds += 1;
        for x in stratified_points(ext, points - kept.len(), &mut rng) {
            if kept.len() == points {
                break;
            }
            if near_breakpoint(ext, &x, MARGIN) {
                skipped += 1;
            } else {
                kept.push(x);
            }
        }
    }
    let max_rel_err = kept
        .par_iter()
        .map(|x| {
            let g = ext.grad_normalized(x);
            let fd = central_difference(|p| ext.eval_normalized(p), x, STEP);
            (fd - &g).amax() / g.amax().max(1.0)
        })
        .reduce(|| 0.0, f64::max);
    GradientCheck {
        max_rel_err,
        points: kept.len(),
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub max_err: f64,
    pub points: usize,
    pub failures: usize,
}

/// `max |Φ⁻¹(Φ(x)) - x|` over stratified points, in the caller's
/// coordinates.
pub fn roundtrip_check(ext: &ExtensionStructure, points: usize, seed: u64) -> RoundTrip {
    let mut rng = rng_for(seed, STREAM_ROUNDTRIP);
    let pts = stratified_points(ext, points, &mut rng);
    let frame = ext.frame();
    let results: Vec<Option<f64>> = pts
        .par_iter()
        .map(|xn| {
            let x = frame.invert(xn);
            let y = ext.eval(&x);
            ext.invert(&y).ok().map(|back| (back - &x).norm())
        })
        .collect();
    RoundTrip {
        max_err: results.iter().flatten().fold(0.0, |m, &e| m.max(e)),
        points: pts.len(),
        failures: results.iter().filter(|r| r.is_none()).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    /// Max `|Θ̃_in + Σ Θ̃_ν - 1|` over sampled points of the root box.
    pub identity_max_err: f64,
    /// Sup of `δ |∇Θ̃_in|` and `δ |∇Θ̃_ν|`.
    pub gradient_constant: f64,
    pub points: usize,
}

/// Samples the root box uniformly plus the strata and checks that the
/// modified partition sums to one.
pub fn partition_report(ext: &ExtensionStructure, points: usize, seed: u64) -> PartitionReport {
    let mut rng = rng_for(seed, STREAM_PARTITION);
    let n = ext.dim();
    let l = ext.decomposition().half_width();
    let lo = Vector::from_element(n, -l);
    let hi = Vector::from_element(n, l);
    let mut pts: Vec<Vector> = (0..points / 2)
        .map(|_| in_box(&mut rng, &lo, &hi))
        .collect();
    pts.extend(
        stratified_points(ext, points - points / 2, &mut rng)
            .into_iter()
            .filter(|x| ext.decomposition().in_root_box(x)),
    );
    let rd = ext.regularized_distance();
    let (err, constant) = pts
        .par_iter()
        .map(|x| {
            let (chi, terms) = ext.partition_weights(x);
            let sum = chi + terms.iter().map(|t| t.1).sum::<f64>();
            let (delta, grad_delta) = rd.eval(x);
            let (_, dchi) = ext.cutoff().eval(delta);
            let grad_in = &grad_delta * dchi;
            let mut constant = grad_in.norm() * delta;
            for t in ext.decomposition().partition(x) {
                let g = &t.grad * (1.0 - chi) - &grad_in * t.value;
                constant = constant.max(g.norm() * delta);
            }
            ((sum - 1.0).abs(), constant)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    PartitionReport {
        identity_max_err: err,
        gradient_constant: constant,
        points: pts.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientGaps {
    /// Sup over `δ <= 2η` of `‖∇Φ - ∇φ‖`.
    pub near_sup: f64,
    /// Sup over `δ > 2η`, `x ∈ Q_μ*`, of `‖∇Φ - ∇A_μ‖`.
    pub blend_sup: f64,
    pub points: usize,
}

pub fn gradient_gaps(ext: &ExtensionStructure, points: usize, seed: u64) -> GradientGaps {
    let mut rng = rng_for(seed, STREAM_GRADIENT_GAPS);
    let mut pts = stratum_points(ext, Region::Near, points / 2, &mut rng);
    pts.extend(stratum_points(
        ext,
        Region::Blend,
        points - points / 2,
        &mut rng,
    ));
    let two_eta = 2.0 * ext.eta();
    let phi = ext.phi();
    let (near_sup, blend_sup) = pts
        .par_iter()
        .map(|x| {
            let g = ext.grad_normalized(x);
            if ext.regularized_distance().value(x) <= two_eta {
                (op_norm(&(g - phi.grad(x))), 0.0)
            } else {
                let gap = ext
                    .decomposition()
                    .covering(x)
                    .into_iter()
                    .map(|mu| op_norm(&(&g - ext.assignment().for_cube(mu).linear())))
                    .fold(0.0, f64::max);
                (0.0, gap)
            }
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    GradientGaps {
        near_sup,
        blend_sup,
        points: pts.len(),
    }
}

/// Pass/fail limits applied by [`full_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Limit on `distortion_spectrum_sup / epsilon_budget`.
    pub max_spectrum_ratio: f64,
    /// Limit on the overlap value gap divided by `epsilon_budget`.
    pub max_consistency_ratio: f64,
    /// Slack allowed of the bi-Lipschitz sup over the spectrum sup.
    pub bilipschitz_slack: f64,
    pub field_tolerance: f64,
    pub fd_tolerance: f64,
    pub roundtrip_tolerance: f64,
    pub partition_tolerance: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_spectrum_ratio: 50.0,
            max_consistency_ratio: 50.0,
            bilipschitz_slack: 1e-9,
            field_tolerance: 1e-12,
            fd_tolerance: 1e-6,
            roundtrip_tolerance: 1e-8,
            partition_tolerance: 1e-12,
        }
    }
}

/// Sample counts for [`full_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationSettings {
    pub samples: usize,
    pub pairs: usize,
    pub grid_resolution: usize,
    pub fd_points: usize,
    pub roundtrip_points: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub eps_input: f64,
    pub epsilon_budget: f64,
    pub distortion_spectrum_sup: f64,
    pub spectrum: SpectrumReport,
    pub bilipschitz_sup: f64,
    pub far_field_max_err: f64,
    pub near_field_max_err: f64,
    pub det_sign: i32,
    pub injectivity: InjectivityReport,
    pub injectivity_collisions: usize,
    pub fd_grad_max_rel_err: f64,
    pub fd: GradientCheck,
    pub roundtrip: RoundTrip,
    pub partition: PartitionReport,
    pub gradient_gaps: GradientGaps,
    /// `distortion_spectrum_sup / eps_input`.
    #[serde(rename = "realized_C")]
    pub realized_c: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

/// Runs every check and marks each against `thresholds`.
pub fn full_report(
    ext: &ExtensionStructure,
    settings: &VerificationSettings,
    thresholds: &Thresholds,
) -> VerificationReport {
    let seed = settings.seed;
    let spectrum = distortion_spectrum_report(ext, settings.samples, seed);
    let bilipschitz_sup = bilipschitz_report(ext, settings.pairs, seed);
    let (far, near) = far_near_field_checks(ext, settings.samples, seed);
    let injectivity = injectivity_probe(ext, settings.grid_resolution);
    let fd = fd_gradient_check(ext, settings.fd_points, seed);
    let roundtrip = roundtrip_check(ext, settings.roundtrip_points, seed);
    let partition = partition_report(ext, settings.samples, seed);
    let gradient_gaps = gradient_gaps(ext, settings.samples, seed);
    let eps_input = ext.distortion().eps();
    let budget = ext.epsilon_budget();
    let consistency = ext.consistency();

    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, limit: f64| {
        checks.push(CheckOutcome {
            name: name.to_string(),
            value,
            limit,
            pass: value <= limit,
        });
    };
    check(
        "distortion_spectrum",
        spectrum.sup,
        thresholds.max_spectrum_ratio * budget,
    );
    check(
        "bilipschitz",
        bilipschitz_sup,
        spectrum.sup + thresholds.bilipschitz_slack,
    );
    check("far_field", far, thresholds.field_tolerance);
    check("near_field", near, thresholds.field_tolerance);
    check(
        "consistency_value_gap",
        consistency.sup_value_gap,
        thresholds.max_consistency_ratio * budget,
    );
    check("injectivity_collisions", injectivity.collisions as f64, 0.0);
    check(
        "det_sign_changes",
        if injectivity.det_sign == 0 { 1.0 } else { 0.0 },
        0.0,
    );
    check("fd_gradient", fd.max_rel_err, thresholds.fd_tolerance);
    check(
        "roundtrip",
        roundtrip.max_err,
        thresholds.roundtrip_tolerance,
    );
    check("roundtrip_failures", roundtrip.failures as f64, 0.0);
    check(
        "partition_identity",
        partition.identity_max_err,
        thresholds.partition_tolerance,
    );
    let pass = checks.iter().all(|c| c.pass);

    VerificationReport {
        eps_input,
        epsilon_budget: budget,
        distortion_spectrum_sup: spectrum.sup,
        bilipschitz_sup,
        far_field_max_err: far,
        near_field_max_err: near,
        det_sign: injectivity.det_sign,
        injectivity_collisions: injectivity.collisions,
        fd_grad_max_rel_err: fd.max_rel_err,
        realized_c: (eps_input > 0.0).then(|| spectrum.sup / eps_input),
        spectrum,
        injectivity,
        fd,
        roundtrip,
        partition,
        gradient_gaps,
        checks,
        pass,
    }
}
