//! One-dimensional C^∞ building blocks: the `exp(-1/t)` smoothstep, the
//! plateau used by the cube bumps, and the cutoff `χ`.

/// Supremum of the smoothstep derivative, attained at `t = 1/2`.
pub const SMOOTHSTEP_SLOPE_MAX: f64 = 2.0;

/// `s(t) = 1 / (1 + exp(1/t - 1/(1-t)))` on `(0, 1)`, clamped to 0 and 1
/// outside. Returns `(s, s')`.
pub fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let u = 1.0 - t;
    let g = 1.0 / t - 1.0 / u;
    if g > 700.0 {
        return (0.0, 0.0);
    }
    if g < -700.0 {
        return (1.0, 0.0);
    }
    let s = 1.0 / (1.0 + g.exp());
    let ds = s * (1.0 - s) * (1.0 / (t * t) + 1.0 / (u * u));
    (s, ds)
}

/// Plateau `ρ(u)`: 1 on `[0, 1]`, 0 outside `(-1, 2)`, smoothstep ramps in
/// between. Returns `(ρ, ρ')`.
pub fn plateau(u: f64) -> (f64, f64) {
    if u <= -1.0 || u >= 2.0 {
        (0.0, 0.0)
    } else if u < 0.0 {
        smoothstep(u + 1.0)
    } else if u <= 1.0 {
        (1.0, 0.0)
    } else {
        let (s, ds) = smoothstep(2.0 - u);
        (s, -ds)
    }
}

/// Breakpoints of [`plateau`], where the profile changes analytic piece.
pub const PLATEAU_BREAKS: [f64; 4] = [-1.0, 0.0, 1.0, 2.0];

/// The cutoff `χ`: 1 for `t <= η`, 0 for `t >= 2η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub eta: f64,
}

impl Cutoff {
    pub fn new(eta: f64) -> Self {
        Self { eta }
    }

    /// `(χ(t), χ'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let eta = self.eta;
        if t <= eta {
            (1.0, 0.0)
        } else if t >= 2.0 * eta {
            (0.0, 0.0)
        } else {
            let (s, ds) = smoothstep((t - eta) / eta);
            (1.0 - s, -ds / eta)
        }
    }

    /// `C_χ` in `|χ'| <= C_χ / η`.
    pub fn slope_constant(&self) -> f64 {
        SMOOTHSTEP_SLOPE_MAX
    }
}
