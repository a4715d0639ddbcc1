//! Seeded sampling helpers shared by the validation routines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::Vector;

pub type SampleRng = ChaCha8Rng;

/// Derives an independent stream for one named check from the scenario seed.
pub fn rng_for(seed: u64, stream: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Uniform point in the closed ball `B(center, radius)`.
pub fn in_ball<R: Rng + ?Sized>(rng: &mut R, center: &Vector, radius: f64) -> Vector {
    let n = center.len();
    let u: f64 = rng.gen();
    let r = radius * u.powf(1.0 / n as f64);
    center + unit_direction(rng, n) * r
}

/// Uniform point in the axis-aligned box `[lo, hi]`.
pub fn in_box<R: Rng + ?Sized>(rng: &mut R, lo: &Vector, hi: &Vector) -> Vector {
    Vector::from_fn(lo.len(), |i, _| rng.gen_range(lo[i]..=hi[i]))
}

/// Uniform point in the cube `corner + [-side, 2 side]^n`, i.e. the 3x
/// dilation of `corner + [0, side]^n`.
pub fn in_dilated_cube<R: Rng + ?Sized>(rng: &mut R, corner: &[f64], side: f64) -> Vector {
    Vector::from_fn(corner.len(), |i, _| {
        corner[i] - side + 3.0 * side * rng.gen::<f64>()
    })
}
