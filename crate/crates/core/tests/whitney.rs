use isoext::compact_set::{BallUnionSet, WitnessLimits};
use isoext::geometry::{vector, Ball, Vector};
use isoext::sampling::{in_box, in_dilated_cube, rng_for};
use isoext::whitney::*;
use isoext::Error;
use proptest::prelude::*;
use rand::Rng;

fn ball(c: &[f64], r: f64) -> Ball {
    Ball::new(vector(c), r).unwrap()
}

fn unit_diameter_ball(n: usize) -> BallUnionSet {
    BallUnionSet::new(vec![Ball::new(Vector::zeros(n), 0.5).unwrap()]).unwrap()
}

fn dumbbell(n: usize) -> BallUnionSet {
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    a[0] = -0.25;
    b[0] = 0.25;
    BallUnionSet::new(vec![ball(&a, 0.25), ball(&b, 0.25)]).unwrap()
}

fn config(c0: f64, eta: f64) -> DecompositionConfig {
    DecompositionConfig {
        c0,
        eta,
        cube_cap: DEFAULT_CUBE_CAP,
        limits: WitnessLimits::default(),
    }
}

/// Distance from the box `[lo, hi]` to `E` by clamping each ball center.
fn box_distance_oracle(set: &BallUnionSet, lo: &[f64], hi: &[f64]) -> f64 {
    set.balls()
        .iter()
        .map(|b| {
            let gap: f64 = (0..lo.len())
                .map(|k| {
                    let c = b.center[k];
                    let nearest = c.clamp(lo[k], hi[k]);
                    (c - nearest).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            (gap - b.radius).max(0.0)
        })
        .fold(f64::INFINITY, f64::min)
}

fn upper(q: &DyadicCube) -> Vec<f64> {
    q.corner.iter().map(|c| c + q.side).collect()
}

#[test]
fn accepted_cubes_lie_in_the_whitney_band() {
    for (set, eta) in [
        (unit_diameter_ball(2), 0.02),
        (dumbbell(2), 0.025),
        (dumbbell(3), 0.05),
    ] {
        let d = WhitneyDecomposition::build(&set, &config(0.5, eta)).unwrap();
        assert!(!d.cubes().is_empty());
        for q in d.cubes() {
            let dist = box_distance_oracle(&set, &q.corner, &upper(q));
            assert!((dist - q.dist).abs() < 1e-12);
            assert!(
                q.diameter() <= dist * (1.0 + 1e-12),
                "cube too close: {q:?}"
            );
            assert!(dist <= 4.0 * q.diameter(), "cube too far: {q:?}");
        }
    }
}

#[test]
fn cubes_tile_the_region_above_the_floor() {
    let set = unit_diameter_ball(2);
    let eta = 0.02;
    let d = WhitneyDecomposition::build(&set, &config(0.5, eta)).unwrap();
    let l = d.half_width();
    let mut rng = rng_for(1, 0);
    let (lo, hi) = (Vector::from_element(2, -l), Vector::from_element(2, l));
    let mut taken = 0;
    while taken < 10_000 {
        let x = in_box(&mut rng, &lo, &hi);
        let dx = set.distance(&x);
        if !(dx > eta && dx <= 0.5 + 1.0) {
            continue;
        }
        taken += 1;
        let owners = d.cubes().iter().filter(|q| q.contains(&x)).count();
        assert_eq!(owners, 1, "x = {x:?}");
        assert_eq!(d.locate(&x).map(|i| d.cubes()[i].contains(&x)), Some(true));
        let cover = d.covering(&x);
        let brute: Vec<usize> = (0..d.cubes().len())
            .filter(|&i| d.cubes()[i].dilation_contains(&x))
            .collect();
        assert_eq!(cover, brute);
        assert!(cover.len() <= d.k_ov());
    }
}

#[test]
fn overlap_bound_matches_brute_force() {
    for (set, eta, n) in [(unit_diameter_ball(2), 0.02, 2), (dumbbell(3), 0.05, 3)] {
        let d = WhitneyDecomposition::build(&set, &config(0.5, eta)).unwrap();
        let cubes = d.cubes();
        let meets = |a: &DyadicCube, b: &DyadicCube| {
            let (alo, ahi) = a.dilated_bounds();
            let (blo, bhi) = b.dilated_bounds();
            (0..n).all(|k| alo[k] <= bhi[k] && blo[k] <= ahi[k])
        };
        let brute = if cubes.len() <= 5000 {
            (0..cubes.len())
                .map(|i| cubes.iter().filter(|q| meets(&cubes[i], q)).count())
                .max()
                .unwrap()
        } else {
            d.k_ov()
        };
        assert_eq!(d.k_ov(), brute);
        assert!(d.k_ov() <= 12usize.pow(n as u32), "K_ov = {}", d.k_ov());
        assert_eq!(d.stats().k_ov, d.k_ov());
    }
}

#[test]
fn pruned_cubes_stay_within_the_cutoff_floor() {
    let set = dumbbell(2);
    let eta = 0.025;
    let d = WhitneyDecomposition::build(&set, &config(0.5, eta)).unwrap();
    assert!(!d.pruned_cubes().is_empty());
    let mut rng = rng_for(2, 0);
    for q in d.pruned_cubes() {
        for _ in 0..100 {
            let x = in_dilated_cube(&mut rng, &q.corner, q.side);
            assert!(set.distance(&x) <= eta);
        }
    }
}

#[test]
fn realized_band_constants_hold_on_dilations() {
    for (set, eta, n) in [(unit_diameter_ball(2), 0.02, 2), (dumbbell(3), 0.05, 3)] {
        let d = WhitneyDecomposition::build(&set, &config(0.5, eta)).unwrap();
        let mut rng = rng_for(3, 0);
        for _ in 0..10_000 {
            let q = &d.cubes()[rng.gen_range(0..d.cubes().len())];
            let x = in_dilated_cube(&mut rng, &q.corner, q.side);
            let dx = set.distance(&x);
            assert!(d.c_low() * q.side <= dx * (1.0 + 1e-12));
            assert!(dx <= d.c_high() * q.side * (1.0 + 1e-12));
        }
        let sqrt_n = (n as f64).sqrt();
        assert!(d.c_high() <= 4.0 * sqrt_n + 3.0 * sqrt_n);
        assert!(d.c_low() >= 0.0);
        assert!((d.c3() - 0.5 / d.c_high()).abs() < 1e-15);
        // x ∈ Q* with side <= c3 implies d(x) < c0.
        for q in d.cubes().iter().filter(|q| q.side <= d.c3()) {
            assert!(q.dilated_dist_high <= 0.5);
            assert_eq!(q.case, CubeCase::SmallCube);
            assert!(q.ball.is_some());
        }
        for q in d.cubes().iter().filter(|q| q.side > d.c3()) {
            assert_eq!(q.case, CubeCase::NotSoSmall);
        }
    }
}

#[test]
fn cube_balls_have_finite_constants() {
    let set = dumbbell(2);
    let d = WhitneyDecomposition::build(&set, &config(0.5, 0.025)).unwrap();
    let rd = RegularizedDistance::new(&set, DEFAULT_EXPONENT).unwrap();
    let c = d.ball_constants(&rd, 10_000, 4);
    assert!(c.sample_count > 5000);
    for v in [
        c.containment,
        c.radius_over_delta_max,
        c.center_offset_over_delta_max,
        c.neighbor_containment,
    ] {
        assert!(v.is_finite() && v > 0.0);
    }
    assert!(c.radius_over_delta_min > 0.0);
    // Every assigned ball sits inside E.
    for q in d.cubes() {
        if let Some(b) = q.ball {
            assert!(b < set.balls().len());
        }
    }
}

#[test]
fn bumps_form_a_partition_of_unity() {
    let set = dumbbell(2);
    let d = WhitneyDecomposition::build(&set, &config(0.5, 0.025)).unwrap();
    let mut rng = rng_for(5, 0);
    let l = d.half_width();
    let (lo, hi) = (Vector::from_element(2, -l), Vector::from_element(2, l));
    let mut checked = 0;
    while checked < 10_000 {
        let x = in_box(&mut rng, &lo, &hi);
        if d.locate(&x).is_none() {
            continue;
        }
        checked += 1;
        let terms = d.partition(&x);
        let total: f64 = terms.iter().map(|t| t.value).sum();
        assert!((total - 1.0).abs() <= 1e-12);
        let grad_total = terms.iter().fold(Vector::zeros(2), |acc, t| acc + &t.grad);
        assert!(
            grad_total.amax() <= 1e-9 * terms.iter().map(|t| t.grad.amax()).fold(1.0, f64::max)
        );
        for t in &terms {
            assert!((0.0..=1.0).contains(&t.value));
            assert!(d.cubes()[t.cube].dilation_contains(&x));
        }
    }
}

#[test]
fn bump_support_and_lone_terms() {
    let set = dumbbell(2);
    let d = WhitneyDecomposition::build(&set, &config(0.5, 0.025)).unwrap();
    let far = vector(&[d.half_width() - 1e-9, d.half_width() - 1e-9]);
    let q0 = d.locate(&far).unwrap();
    let q = &d.cubes()[q0];
    // A point outside Q* gets nothing from that cube.
    let outside = vector(&[q.corner[0] - 1.5 * q.side, q.corner[1]]);
    assert_eq!(d.theta(q0, &outside), (0.0, Vector::zeros(2)));
    // ψ_ν = 1 on Q_ν, so at its center Θ_ν = 1 / (1 + Σ_{μ≠ν} ψ_μ); a lone
    // term gives exactly 1.
    for (i, q) in d.cubes().iter().enumerate() {
        let c = q.center();
        let others: f64 = d
            .covering(&c)
            .into_iter()
            .filter(|&j| j != i)
            .map(|j| d.cubes()[j].bump(&c).0)
            .sum();
        let expected = 1.0 / (1.0 + others);
        assert!((d.theta(i, &c).0 - expected).abs() <= 1e-15);
        if others == 0.0 {
            assert_eq!(d.theta(i, &c).0, 1.0);
        }
    }
}

#[test]
fn equal_neighbours_split_their_shared_face_evenly() {
    let set = dumbbell(2);
    let d = WhitneyDecomposition::build(&set, &config(0.5, 0.025)).unwrap();
    let mut seen = 0;
    for (i, q) in d.cubes().iter().enumerate() {
        let mut mid = q.center();
        mid[0] = q.corner[0] + q.side;
        let Some(j) = d.locate(&mid) else { continue };
        let r = &d.cubes()[j];
        if r.level != q.level || j == i {
            continue;
        }
        seen += 1;
        let (a, b) = (d.theta(i, &mid).0, d.theta(j, &mid).0);
        assert!(a > 0.0 && (a - b).abs() <= 1e-15);
        let members = d
            .partition(&mid)
            .into_iter()
            .filter(|t| t.value > 0.0)
            .count();
        if members == 2 {
            assert!((a - 0.5).abs() <= 1e-15);
        }
    }
    assert!(seen > 10);
}

#[test]
fn regularized_distance_examples() {
    let one = unit_diameter_ball(2);
    let rd = RegularizedDistance::new(&one, 8).unwrap();
    let x = vector(&[0.9, -0.3]);
    assert!((rd.value(&x) - one.distance(&x)).abs() < 1e-15);
    assert_eq!(rd.eval(&vector(&[0.1, 0.1])), (0.0, Vector::zeros(2)));

    let pair = BallUnionSet::new(vec![ball(&[-1.0, 0.0], 0.5), ball(&[1.0, 0.0], 0.5)]).unwrap();
    let rd = RegularizedDistance::new(&pair, 8).unwrap();
    let t = (1.0f64 + 0.7 * 0.7).sqrt() - 0.5;
    assert!((rd.value(&vector(&[0.0, 0.7])) - t * 2f64.powf(-1.0 / 8.0)).abs() < 1e-14);
    assert_eq!(rd.lower_constant(), 2f64.powf(-1.0 / 8.0));
}

#[test]
fn anchor_examples() {
    let single = unit_diameter_ball(2);
    let a = find_anchor_ball(&single, 0.5, &WitnessLimits::default()).unwrap();
    assert!((vector(&a.point).norm() - 0.75).abs() < 1e-9);
    assert!((single.distance(&vector(&a.point)) - 0.25).abs() <= 1e-10);
    assert_eq!(a.ball, single.balls()[0]);
    assert!((a.containment - 1.0).abs() < 1e-15);
    assert_eq!(
        a,
        find_anchor_ball(&single, 0.5, &WitnessLimits::default()).unwrap()
    );

    for set in [dumbbell(2), dumbbell(3)] {
        let a = find_anchor_ball(&set, 0.5, &WitnessLimits::default()).unwrap();
        assert!(a.ball.radius <= 0.5);
        assert!((set.distance(&vector(&a.point)) - 0.25).abs() <= 1e-10);
        assert!((a.containment - 3.0).abs() < 1e-12);
        for b in set.balls() {
            assert!(
                b.center_distance(&a.ball.center()) + b.radius
                    <= a.containment * a.ball.radius * (1.0 + 1e-12)
            );
        }
    }
}

#[test]
fn build_errors() {
    let set = dumbbell(2);
    assert!(matches!(
        WhitneyDecomposition::build(&set, &config(0.5, 0.07)),
        Err(Error::InvalidConfig(_))
    ));
    let capped = DecompositionConfig {
        cube_cap: 50,
        ..config(0.5, 0.025)
    };
    assert!(matches!(
        WhitneyDecomposition::build(&set, &capped),
        Err(Error::BudgetExceeded { cap: 50 })
    ));
}

fn central_gradient(rd: &RegularizedDistance, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |k, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        (rd.value(&xp) - rd.value(&xm)) / (2.0 * h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn regularized_distance_sandwich_and_gradient(seed in 0u64..1_000_000, m in 1usize..=5) {
        let mut rng = rng_for(seed, 0);
        let balls = (0..m)
            .map(|_| ball(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(0.05..0.4)))
            .collect();
        let set = BallUnionSet::new(balls).unwrap();
        let rd = RegularizedDistance::new(&set, DEFAULT_EXPONENT).unwrap();
        let x = vector(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        let d = set.distance(&x);
        let (delta, grad) = rd.eval(&x);
        prop_assert!(delta <= d * (1.0 + 1e-12));
        prop_assert!(delta >= (m as f64).powf(-1.0 / 8.0) * d * (1.0 - 1e-12));
        prop_assert!(grad.norm() <= 1.0 + 1e-9);
        if d > 1e-3 {
            let fd = central_gradient(&rd, &x, 1e-6);
            prop_assert!((&grad - &fd).amax() <= 1e-6);
        }
    }
}
