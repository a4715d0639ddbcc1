//! Finite-set alignment: Procrustes fitting of labelled point sets, joint
//! normalization, maximal simplex volumes and η-block detection.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{oriented_edge_determinant, simplex_volume, EuclideanMotion, Matrix, Vector};
use crate::sampling::rng_for;

/// Source points `ys` and their images `zs`, matched by index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPair {
    ys: Vec<Vector>,
    zs: Vec<Vector>,
}

impl LabelledPair {
    pub fn new(ys: Vec<Vector>, zs: Vec<Vector>) -> Result<Self> {
        if ys.is_empty() || ys.len() != zs.len() {
            return Err(Error::InvalidConfig(format!(
                "labelled pair needs equally many (>= 1) sources and images, got {} and {}",
                ys.len(),
                zs.len()
            )));
        }
        let n = ys[0].len();
        if ys.iter().chain(&zs).any(|p| p.len() != n) {
            return Err(Error::Dimension(
                "labelled points of mixed dimension".into(),
            ));
        }
        for list in [&ys, &zs] {
            for i in 0..list.len() {
                for j in 0..i {
                    if (&list[i] - &list[j]).norm() <= 1e-12 {
                        return Err(Error::InvalidConfig(format!(
                            "points {j} and {i} of a labelled set coincide"
                        )));
                    }
                }
            }
        }
        Ok(Self { ys, zs })
    }

    pub fn ys(&self) -> &[Vector] {
        &self.ys
    }

    pub fn zs(&self) -> &[Vector] {
        &self.zs
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ys[0].len()
    }
}

fn centroid(points: &[Vector]) -> Vector {
    let mut c = Vector::zeros(points[0].len());
    for p in points {
        c += p;
    }
    c / points.len() as f64
}

/// Least-squares motion `A` with `A(y_i) ≈ z_i`, and `max_i |z_i - A(y_i)|`.
///
/// With `H = Σ (z_i - z̄)(y_i - ȳ)ᵀ = U Σ Vᵀ` the linear part is `U Vᵀ`; when
/// `proper` is set and that has determinant −1, the column of `U` paired with
/// the smallest singular value is negated.
pub fn procrustes_align(pair: &LabelledPair, proper: bool) -> Result<(EuclideanMotion, f64)> {
    let n = pair.dim();
    let y_bar = centroid(pair.ys());
    let z_bar = centroid(pair.zs());
    let t = if pair.len() == 1 {
        Matrix::identity(n, n)
    } else {
        let mut h = Matrix::zeros(n, n);
        for (y, z) in pair.ys().iter().zip(pair.zs()) {
            h += (z - &z_bar) * (y - &y_bar).transpose();
        }
        let svd = h.svd(true, true);
        let mut u = svd.u.expect("U requested");
        let v_t = svd.v_t.expect("Vᵀ requested");
        let mut t = &u * &v_t;
        if proper && t.determinant() < 0.0 {
            let weakest = svd.singular_values.argmin().0;
            for i in 0..n {
                u[(i, weakest)] = -u[(i, weakest)];
            }
            t = &u * &v_t;
        }
        t
    };
    let offset = &z_bar - &t * &y_bar;
    let motion = EuclideanMotion::from_frame(&t, offset)?;
    let residual = pair
        .ys()
        .iter()
        .zip(pair.zs())
        .map(|(y, z)| (z - motion.apply(y)).norm())
        .fold(0.0, f64::max);
    Ok((motion, residual))
}

/// Translates both sets so their first points sit at the origin, then scales
/// them jointly so that `Σ_{i≠j} |y_i - y_j|² + Σ_{i≠j} |z_i - z_j|² = 1`
/// (ordered pairs).
pub fn normalize_pair(pair: &LabelledPair) -> Result<LabelledPair> {
    if pair.len() < 2 {
        return Err(Error::InvalidConfig(
            "normalization needs at least two points".into(),
        ));
    }
    let spread = |pts: &[Vector]| -> f64 {
        let mut s = 0.0;
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if i != j {
                    s += (&pts[i] - &pts[j]).norm_squared();
                }
            }
        }
        s
    };
    let total = spread(pair.ys()) + spread(pair.zs());
    if !(total >= 1e-24) {
        return Err(Error::DegenerateSet { measure: total });
    }
    let s = total.sqrt().recip();
    let shift = |pts: &[Vector]| -> Vec<Vector> {
        let o = pts[0].clone();
        pts.iter().map(|p| (p - &o) * s).collect()
    };
    LabelledPair::new(shift(pair.ys()), shift(pair.zs()))
}

/// Lexicographic `k`-subsets of `0..m`, stopping after `cap` of them.
fn combinations(m: usize, k: usize, cap: usize) -> (Vec<Vec<usize>>, bool) {
    let mut out = Vec::new();
    if k > m {
        return (out, false);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    if cap == 0 {
        return (out, true);
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
            return (out, false);
        };
        if out.len() == cap {
            return (out, true);
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn tuple_diameter(points: &[Vector]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in 0..i {
            d = d.max((&points[i] - &points[j]).norm());
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaBlock {
    pub indices: Vec<usize>,
    pub volume: f64,
    pub diam: f64,
    /// `+1` when source and image simplices have the same orientation.
    pub orientation: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScan {
    pub positive: Vec<EtaBlock>,
    pub negative: Vec<EtaBlock>,
    pub examined: usize,
    pub truncated: bool,
}

/// Scans `(n+1)`-tuples of source points in lexicographic order (at most
/// `tuple_cap`) for simplices with `V_n >= (η diam)^n`, labelling each by
/// whether the image simplex keeps its orientation.
pub fn eta_block_scan(pair: &LabelledPair, eta: f64, tuple_cap: usize) -> Result<BlockScan> {
    let n = pair.dim();
    if pair.len() < n + 1 {
        return Err(Error::InvalidConfig(format!(
            "block scan in R^{n} needs at least {} points, got {}",
            n + 1,
            pair.len()
        )));
    }
    let (tuples, truncated) = combinations(pair.len(), n + 1, tuple_cap);
    let mut scan = BlockScan {
        positive: Vec::new(),
        negative: Vec::new(),
        examined: tuples.len(),
        truncated,
    };
    for indices in tuples {
        let src: Vec<Vector> = indices.iter().map(|&i| pair.ys()[i].clone()).collect();
        let volume = simplex_volume(&src)?;
        let diam = tuple_diameter(&src);
        if !(volume > 0.0) || volume < (eta * diam).powi(n as i32) {
            continue;
        }
        let img: Vec<Vector> = indices.iter().map(|&i| pair.zs()[i].clone()).collect();
        let agree = oriented_edge_determinant(&src)? * oriented_edge_determinant(&img)? > 0.0;
        let block = EtaBlock {
            indices,
            volume,
            diam,
            orientation: if agree { 1 } else { -1 },
        };
        if agree {
            scan.positive.push(block);
        } else {
            scan.negative.push(block);
        }
    }
    Ok(scan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVolumeMax {
    pub volume: f64,
    pub indices: Vec<usize>,
    pub examined: usize,
    pub truncated: bool,
}

/// `V_l`: the largest `l`-simplex volume over `(l+1)`-tuples of `points`.
/// Exhaustive when at most `tuple_cap` tuples exist, otherwise a seeded
/// random subsample of `tuple_cap` tuples.
pub fn max_simplex_volume(
    points: &[Vector],
    l: usize,
    tuple_cap: usize,
) -> Result<SimplexVolumeMax> {
    let n = points.first().map_or(0, |p| p.len());
    if l > n {
        return Err(Error::Dimension(format!(
            "{l}-simplex does not fit in R^{n}"
        )));
    }
    if points.len() < l + 1 {
        return Err(Error::InvalidConfig(format!(
            "{l}-simplices need {} points, got {}",
            l + 1,
            points.len()
        )));
    }
    let (mut tuples, truncated) = combinations(points.len(), l + 1, tuple_cap);
    if truncated {
        let mut rng = rng_for(0, 0);
        tuples = (0..tuple_cap)
            .map(|_| {
                let mut t = sample(&mut rng, points.len(), l + 1).into_vec();
                t.sort_unstable();
                t
            })
            .collect();
    }
    let mut best = SimplexVolumeMax {
        volume: 0.0,
        indices: (0..=l).collect(),
        examined: tuples.len(),
        truncated,
    };
    for t in tuples {
        let pts: Vec<Vector> = t.iter().map(|&i| points[i].clone()).collect();
        let v = simplex_volume(&pts)?;
        if v > best.volume {
            best.volume = v;
            best.indices = t;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vector;

    fn pts(coords: &[&[f64]]) -> Vec<Vector> {
        coords.iter().map(|c| vector(c)).collect()
    }

    #[test]
    fn identical_sets_align_with_identity() {
        let ys = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.3, 2.0]]);
        let pair = LabelledPair::new(ys.clone(), ys).unwrap();
        let (m, res) = procrustes_align(&pair, false).unwrap();
        assert!((m.linear() - Matrix::identity(2, 2)).amax() < 1e-12);
        assert!(res < 1e-12);
    }

    #[test]
    fn single_point_gives_translation() {
        let pair = LabelledPair::new(pts(&[&[1.0, 2.0]]), pts(&[&[-1.0, 5.0]])).unwrap();
        let (m, res) = procrustes_align(&pair, true).unwrap();
        assert_eq!(m.linear(), &Matrix::identity(2, 2));
        assert_eq!(m.offset(), &vector(&[-2.0, 3.0]));
        assert_eq!(res, 0.0);
    }

    #[test]
    fn proper_flag_avoids_reflections() {
        let ys = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]]);
        let zs = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, -2.0]]);
        let pair = LabelledPair::new(ys, zs).unwrap();
        let (free, res) = procrustes_align(&pair, false).unwrap();
        assert!(free.determinant() < 0.0 && res < 1e-12);
        let (proper, _) = procrustes_align(&pair, true).unwrap();
        assert!(proper.is_proper());
    }

    #[test]
    fn normalize_pair_examples() {
        let e = pts(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let pair = LabelledPair::new(e.clone(), e).unwrap();
        let out = normalize_pair(&pair).unwrap();
        assert_eq!(out.ys()[1], vector(&[0.5, 0.0]));
        assert_eq!(out.zs()[1], vector(&[0.5, 0.0]));
        let again = normalize_pair(&out).unwrap();
        assert!((again.ys()[1].clone() - vector(&[0.5, 0.0])).amax() < 1e-12);
        let single = LabelledPair::new(pts(&[&[0.0]]), pts(&[&[1.0]])).unwrap();
        assert!(normalize_pair(&single).is_err());
    }

    #[test]
    fn block_scan_examples() {
        let src = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let pair = LabelledPair::new(src.clone(), src.clone()).unwrap();
        let scan = eta_block_scan(&pair, 0.1, 100).unwrap();
        assert_eq!(scan.positive.len(), 1);
        assert_eq!(scan.positive[0].volume, 0.5);
        assert!(scan.negative.is_empty());

        let mirrored: Vec<Vector> = src.iter().map(|p| vector(&[p[0], -p[1]])).collect();
        let pair = LabelledPair::new(src, mirrored).unwrap();
        let scan = eta_block_scan(&pair, 0.1, 100).unwrap();
        assert_eq!(scan.negative.len(), 1);
        assert!(scan.positive.is_empty());

        let line = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]]);
        let pair = LabelledPair::new(line.clone(), line).unwrap();
        let scan = eta_block_scan(&pair, 1e-9, 100).unwrap();
        assert!(scan.positive.is_empty() && scan.negative.is_empty());
    }

    #[test]
    fn max_simplex_volume_examples() {
        let square = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]);
        let best = max_simplex_volume(&square, 2, 100).unwrap();
        assert!((best.volume - 0.5).abs() < 1e-15);
        assert_eq!(best.examined, 4);
        assert!(!best.truncated);
        assert!(matches!(
            max_simplex_volume(&square, 3, 100),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let (c, truncated) = combinations(4, 2, 100);
        assert_eq!(
            c,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert!(!truncated);
        let (c, truncated) = combinations(4, 2, 3);
        assert_eq!(c.len(), 3);
        assert!(truncated);
        assert!(!combinations(4, 2, 6).1);
    }
}
