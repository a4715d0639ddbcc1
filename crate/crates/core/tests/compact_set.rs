use isoext::compact_set::{BallUnionSet, WitnessLimits};
use isoext::geometry::{vector, Ball, Vector};
use isoext::sampling::{rng_for, unit_direction};
use isoext::Error;
use proptest::prelude::*;
use rand::Rng;

fn ball(c: &[f64], r: f64) -> Ball {
    Ball::new(vector(c), r).unwrap()
}

fn set(balls: Vec<Ball>) -> BallUnionSet {
    BallUnionSet::new(balls).unwrap()
}

const NO_LIMITS: WitnessLimits = WitnessLimits { c1: None, c2: None };

#[test]
fn distance_examples() {
    let unit = set(vec![ball(&[0.0, 0.0, 0.0], 1.0)]);
    assert_eq!(unit.distance(&vector(&[2.0, 0.0, 0.0])), 1.0);
    assert_eq!(unit.distance(&vector(&[0.3, -0.2, 0.5])), 0.0);
    assert!(unit.contains(&vector(&[0.3, -0.2, 0.5])));

    let pair = set(vec![ball(&[0.0, 0.0], 1.0), ball(&[4.0, 0.0], 1.0)]);
    assert_eq!(pair.distance(&vector(&[2.0, 0.0])), 1.0);
}

#[test]
fn normalization_examples() {
    let half = set(vec![ball(&[0.2, 0.1], 0.5)]);
    let (n, s) = half.normalize_to_unit_diameter().unwrap();
    assert_eq!(s.scale, 1.0);
    assert_eq!(n.balls()[0].radius, 0.5);
    assert!((n.diameter() - 1.0).abs() < 1e-12);

    let unit = set(vec![ball(&[3.0, -1.0], 1.0)]);
    let (n, s) = unit.normalize_to_unit_diameter().unwrap();
    assert_eq!(s.scale, 0.5);
    assert_eq!(n.balls()[0].radius, 0.5);

    let dumbbell = set(vec![ball(&[-0.25, 0.0], 0.25), ball(&[0.25, 0.0], 0.25)]);
    assert_eq!(dumbbell.diameter(), 1.0);
    let (n, s) = dumbbell.normalize_to_unit_diameter().unwrap();
    assert_eq!(s.scale, 1.0);
    assert_eq!(n, dumbbell);

    let wide = set(vec![
        ball(&[1.0, 2.0], 0.3),
        ball(&[4.0, -2.0], 0.7),
        ball(&[0.0, 0.0], 0.1),
    ]);
    let (n, s) = wide.normalize_to_unit_diameter().unwrap();
    assert!((n.diameter() - 1.0).abs() < 1e-12);
    let x = vector(&[0.7, 5.0]);
    assert!((s.invert(&s.apply(&x)) - &x).amax() < 1e-12);
    assert!((n.distance(&s.apply(&x)) - s.scale * wide.distance(&x)).abs() < 1e-12);
}

#[test]
fn degenerate_set_is_rejected() {
    let tiny = set(vec![ball(&[0.0, 0.0], 1e-13)]);
    assert!(matches!(
        tiny.normalize_to_unit_diameter(),
        Err(Error::DegenerateSet { .. })
    ));
}

#[test]
fn interior_ball_examples() {
    let unit = set(vec![ball(&[0.0, 0.0], 1.0)]);
    let w = unit
        .interior_ball_query(&vector(&[1.5, 0.0]), 0.5, &NO_LIMITS)
        .unwrap();
    assert_eq!(w.ball.center(), vector(&[0.0, 0.0]));
    assert_eq!(w.ball.radius, 1.0);
    assert!((w.c1_ratio - 3.0).abs() < 1e-15);
    assert!((w.c2_ratio - 2.0).abs() < 1e-15);

    assert!(matches!(
        unit.interior_ball_query(&vector(&[0.5, 0.0]), 0.5, &NO_LIMITS),
        Err(Error::OutOfRange { .. })
    ));
    // c0 diam E = 1 for the unit ball.
    assert!(matches!(
        unit.interior_ball_query(&vector(&[2.5, 0.0]), 0.5, &NO_LIMITS),
        Err(Error::OutOfRange { .. })
    ));
    assert!(unit
        .interior_ball_query(&vector(&[2.0, 0.0]), 0.5, &NO_LIMITS)
        .is_ok());

    let pair = set(vec![ball(&[0.0, 0.0], 1.0), ball(&[4.0, 0.0], 1.0)]);
    let w = pair
        .interior_ball_query(&vector(&[1.2, 0.0]), 0.5, &NO_LIMITS)
        .unwrap();
    assert_eq!(w.index, 0);

    let strict = WitnessLimits {
        c1: Some(2.0),
        c2: None,
    };
    assert!(matches!(
        unit.interior_ball_query(&vector(&[1.5, 0.0]), 0.5, &strict),
        Err(Error::NoWitness { .. })
    ));
}

#[test]
fn unit_ball_geometry_constants() {
    let unit = set(vec![ball(&[0.0, 0.0], 1.0)]);
    let report = unit.validate_geometry(0.5, 10_000, 9, &NO_LIMITS).unwrap();
    assert_eq!(report.sample_count, 10_000);
    // At distance t from the sphere, |z - x| / d = (1 + t) / t and r / d = 1 / t,
    // with t ranging over (0, c0 diam E] = (0, 1].
    assert!(report.c2_achieved >= 2.0 / 3.0);
    assert!(report.c2_achieved >= 1.0 - 1e-12);
    assert!(report.c1_achieved >= 2.0);
    let worst = vector(&report.worst_point);
    let t = unit.distance(&worst);
    assert!(((1.0 + t) / t - report.c1_achieved).abs() < 1e-9 * report.c1_achieved);

    let again = unit.validate_geometry(0.5, 10_000, 9, &NO_LIMITS).unwrap();
    assert_eq!(report, again);
}

#[test]
fn geometry_limits_turn_into_errors() {
    let unit = set(vec![ball(&[0.0, 0.0], 1.0)]);
    let limits = WitnessLimits {
        c1: Some(3.0),
        c2: None,
    };
    match unit.validate_geometry(0.5, 10_000, 9, &limits) {
        Err(Error::NoWitness { point, .. }) => {
            let d = unit.distance(&vector(&point));
            assert!(d < 0.5, "failing point at d = {d} should have |z-x|/d > 3");
        }
        other => panic!("expected NoWitness, got {other:?}"),
    }
}

#[test]
fn diameter_matches_boundary_sampling() {
    let mut rng = rng_for(5, 0);
    let e = set(vec![
        ball(&[0.0, 0.0], 0.3),
        ball(&[1.0, 0.5], 0.2),
        ball(&[-0.4, 0.9], 0.25),
    ]);
    let boundary: Vec<Vector> = (0..3000)
        .map(|i| {
            let b = &e.balls()[i % 3];
            b.center() + unit_direction(&mut rng, 2) * b.radius
        })
        .collect();
    let mut brute: f64 = 0.0;
    for a in &boundary {
        for b in &boundary {
            brute = brute.max((a - b).norm());
        }
    }
    assert!(brute <= e.diameter() + 1e-12);
    assert!(e.diameter() - brute < 1e-3);
    // The maximizing direction realizes the formula exactly.
    let (b0, b1) = (&e.balls()[1], &e.balls()[2]);
    let u = (b1.center() - b0.center()).normalize();
    let p = b0.center() - &u * b0.radius;
    let q = b1.center() + &u * b1.radius;
    assert!(((p - q).norm() - e.diameter()).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_is_one_lipschitz(seed in 0u64..100_000) {
        let mut rng = rng_for(seed, 0);
        let balls = (0..3)
            .map(|_| Ball::new(vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]), rng.gen_range(0.05..0.5)).unwrap())
            .collect();
        let e = set(balls);
        let x = vector(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
        let y = vector(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
        prop_assert!((e.distance(&x) - e.distance(&y)).abs() <= (&x - &y).norm() + 1e-12);
    }

    #[test]
    fn witness_balls_lie_in_e(seed in 0u64..100_000) {
        let mut rng = rng_for(seed, 1);
        let e = set(vec![ball(&[0.0, 0.0], 0.3), ball(&[0.6, 0.1], 0.2)]);
        let x = e.balls()[seed as usize % 2].center() + unit_direction(&mut rng, 2) * rng.gen_range(0.31..0.9);
        let d = e.distance(&x);
        prop_assume!(d > 0.0 && d <= 0.5 * e.diameter());
        let w = e.interior_ball_query(&x, 0.5, &NO_LIMITS).unwrap();
        prop_assert!(e.balls().iter().any(|b| b.contains_ball(&w.ball)));
        prop_assert!(w.ball.center_distance(&x) <= w.c1_ratio * d * (1.0 + 1e-12));
        prop_assert!(w.ball.radius >= w.c2_ratio * d * (1.0 - 1e-12));
    }
}
