//! Phase space, the base maps, their inverse branches and symbolic coding.

mod deformed;
pub mod rational;

pub use deformed::{bump_c1_norm, bump_grad, bump_psi1, fixed_point_q, step_deformed, Family};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::MapParams;

/// Slack allowed when checking that a preimage lands back in the trapping region.
pub const BRANCH_TOL: f64 = 1e-12;

/// A point of `S^1 x [-1,1]^2`; `x` is kept in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point { x: wrap(x), y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Reduces `x` into `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Signed circle displacement `a - b` reduced to `[-1/2, 1/2)`.
#[inline]
pub fn circle_diff(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - (d + 0.5).floor()
}

/// One step of the base map.
#[inline]
pub fn step(p: Point, params: &MapParams) -> Point {
    let k = params.cell(p.x);
    let y = params.lambda_c * p.y + params.g(p.x);
    let z = params.flip(k) * (params.lambda_ss * p.z + params.levels[k]);
    Point {
        x: wrap(params.l as f64 * p.x),
        y,
        z,
    }
}

/// `n`-fold composition of [`step`].
pub fn step_n(mut p: Point, params: &MapParams, n: u32) -> Point {
    for _ in 0..n {
        p = step(p, params);
    }
    p
}

/// The preimage of `p` in cell `branch` (1-based).
pub fn inverse_step(p: Point, branch: u8, params: &MapParams) -> Result<Point> {
    if branch == 0 || branch as u32 > params.l {
        return Err(Error::InvalidParams(format!(
            "branch {branch} outside 1..={}",
            params.l
        )));
    }
    let k = (branch - 1) as usize;
    let x = (p.x + k as f64) / params.l as f64;
    let y = (p.y - params.g(x)) / params.lambda_c;
    let z = (params.flip(k) * p.z - params.levels[k]) / params.lambda_ss;
    let (ymax, zmax) = params.trapping_region();
    let excess = (y.abs() - ymax).max(z.abs() - zmax);
    if excess > BRANCH_TOL {
        return Err(Error::BranchMiss {
            point: p.to_array(),
            branch,
            excess,
        });
    }
    Ok(Point { x, y, z })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Forward,
    Backward,
}

/// A word over `{1, ..., l}`. For a forward word, symbol `j` is the cell of `tau^j(x)`;
/// for a backward word, symbol `j` is the cell of the `(j+1)`-th preimage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Itinerary {
    pub symbols: Vec<u8>,
    pub orientation: Orientation,
}

impl Itinerary {
    pub fn forward(symbols: Vec<u8>) -> Self {
        Itinerary {
            symbols,
            orientation: Orientation::Forward,
        }
    }

    pub fn backward(symbols: Vec<u8>) -> Self {
        Itinerary {
            symbols,
            orientation: Orientation::Backward,
        }
    }

    pub fn constant(symbol: u8, len: usize, orientation: Orientation) -> Self {
        Itinerary {
            symbols: vec![symbol; len],
            orientation,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Forward words shift left under the map.
    pub fn shift(&self) -> Itinerary {
        Itinerary {
            symbols: self.symbols.iter().skip(1).copied().collect(),
            orientation: self.orientation,
        }
    }

    /// Symbols as a compact string, e.g. `"1321"`.
    pub fn word(&self) -> String {
        self.symbols
            .iter()
            .map(|s| char::from_digit(*s as u32, 36).unwrap_or('?'))
            .collect()
    }
}

/// Forward itinerary of `x` under `tau(x) = l x mod 1`.
pub fn itinerary_of(x: f64, depth: usize, params: &MapParams) -> Itinerary {
    let mut x = wrap(x);
    let mut symbols = Vec::with_capacity(depth);
    for _ in 0..depth {
        symbols.push(params.cell(x) as u8 + 1);
        x = wrap(params.l as f64 * x);
    }
    Itinerary::forward(symbols)
}

/// Preimages `x_{-1}, x_{-2}, ...` of `x` along a backward word.
pub fn backward_preimages(x: f64, backward: &[u8], l: u32) -> Vec<f64> {
    let lf = l as f64;
    let mut out = Vec::with_capacity(backward.len());
    let mut cur = wrap(x);
    for &b in backward {
        cur = (cur + (b - 1) as f64) / lf;
        out.push(cur);
    }
    out
}

/// A point of the attractor reconstructed from its backward word, with the
/// truncation error bounds in `y` and `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttractorPoint {
    pub point: Point,
    pub y_error: f64,
    pub z_error: f64,
    pub depth: usize,
}

/// Reconstructs the attractor point over `x` whose first `depth` preimages follow
/// `backward`, by summing `y = sum lambda_c^{i-1} g(x_{-i})` and the matching z-series.
pub fn attractor_point(
    x: f64,
    backward: &Itinerary,
    params: &MapParams,
    depth: usize,
) -> Result<AttractorPoint> {
    if depth == 0 || depth > backward.len() {
        return Err(Error::DepthTooSmall {
            depth,
            available: backward.len(),
            tail: f64::INFINITY,
        });
    }
    let lc = params.lambda_c;
    let lss = params.lambda_ss;
    let xs = backward_preimages(x, &backward.symbols[..depth], params.l);
    let (mut y, mut z) = (0.0, 0.0);
    let (mut cpow, mut spow, mut sign) = (1.0, 1.0, 1.0);
    for (i, &xi) in xs.iter().enumerate() {
        let k = (backward.symbols[i] - 1) as usize;
        sign *= params.flip(k);
        y += cpow * params.g(xi);
        z += sign * spow * params.levels[k];
        cpow *= lc;
        spow *= lss;
    }
    Ok(AttractorPoint {
        point: Point { x: wrap(x), y, z },
        y_error: params.sup_abs_g() * cpow / (1.0 - lc),
        z_error: params.sup_abs_h() * spow / (1.0 - lss),
        depth,
    })
}

/// Smallest depth for which both truncation bounds fall below `tol`.
pub fn depth_for_tolerance(params: &MapParams, tol: f64) -> usize {
    let need = |rate: f64, sup: f64| {
        if sup == 0.0 {
            1.0
        } else {
            ((tol * (1.0 - rate) / sup).ln() / rate.ln()).ceil().max(1.0)
        }
    };
    need(params.lambda_c, params.sup_abs_g()).max(need(params.lambda_ss, params.sup_abs_h())) as usize
}

/// Like [`attractor_point`] but picks the depth from a tolerance.
pub fn attractor_point_tol(
    x: f64,
    backward: &Itinerary,
    params: &MapParams,
    tol: f64,
) -> Result<AttractorPoint> {
    let depth = depth_for_tolerance(params, tol);
    if depth > backward.len() {
        let lc = params.lambda_c;
        return Err(Error::DepthTooSmall {
            depth,
            available: backward.len(),
            tail: params.sup_abs_g() * lc.powi(backward.len() as i32) / (1.0 - lc),
        });
    }
    attractor_point(x, backward, params, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate_params, RawParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ex1() -> MapParams {
        validate_params(&RawParams::ex1()).unwrap()
    }

    fn ex2() -> MapParams {
        validate_params(&RawParams::ex2()).unwrap()
    }

    #[test]
    fn origin_images() {
        let p = ex1();
        let q = step(Point::new(0.0, 0.0, 0.0), &p);
        assert_eq!(q, Point::new(0.0, -0.5, p.levels[0]));
        let p2 = ex2();
        assert_eq!(step(Point::default(), &p2), Point::new(0.0, 0.0, 0.5));
    }

    #[test]
    fn z_contracts_affinely() {
        let p = ex1();
        let a = step(Point::new(0.2, 0.1, 0.3), &p);
        let b = step(Point::new(0.2, 0.1, 0.5), &p);
        assert!(((b.z - a.z) - 0.1 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn ex2_flips_on_second_lap() {
        let p = ex2();
        let a = step(Point::new(0.75, 0.0, 0.2), &p);
        // -(0.45 * 0.2 - 0.5)
        assert!((a.z - 0.41).abs() < 1e-15);
        assert!((a.x - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_is_left_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for params in [ex1(), ex2()] {
            let (ymax, _) = params.trapping_region();
            for _ in 0..10_000 {
                let q = Point::new(
                    rng.gen(),
                    rng.gen_range(-1.0..1.0) * ymax,
                    rng.gen_range(-1.0..1.0),
                );
                let b = params.cell(q.x) as u8 + 1;
                let back = inverse_step(step(q, &params), b, &params).unwrap();
                assert!((back.x - q.x).abs() < 1e-12);
                assert!((back.y - q.y).abs() < 1e-12);
                assert!((back.z - q.z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_on_flat_branch() {
        let p = ex1();
        let q = Point::new(0.4, 0.2, 0.05);
        let pre = inverse_step(q, 2, &p).unwrap();
        assert!((pre.y - 0.2 / 0.4).abs() < 1e-15);
        assert!((pre.z - (0.05 - p.levels[1]) / 0.1).abs() < 1e-15);
    }

    #[test]
    fn inverse_rejects_points_outside_the_image() {
        let p = ex1();
        // y' = (0.9 - g) / 0.4 leaves [-1, 1] on the flat branch
        let err = inverse_step(Point::new(0.5, 0.9, 0.0), 2, &p).unwrap_err();
        assert!(matches!(err, Error::BranchMiss { branch: 2, .. }));
        assert!(inverse_step(Point::default(), 4, &p).is_err());
    }

    #[test]
    fn itinerary_of_zero_is_constant() {
        let p = ex1();
        assert_eq!(itinerary_of(0.0, 8, &p).symbols, vec![1; 8]);
    }

    #[test]
    fn itinerary_shift() {
        let p = ex1();
        let x = 0.123_456_789;
        let a = itinerary_of(x, 12, &p).shift();
        let b = itinerary_of(wrap(3.0 * x), 11, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn flat_branch_fixed_point() {
        let p = ex1();
        let w = Itinerary::constant(2, 40, Orientation::Backward);
        let a = attractor_point(0.5, &w, &p, 40).unwrap();
        assert_eq!(a.point.y, 0.0);
        assert!((step(a.point, &p).x - 0.5).abs() < 1e-15);
    }

    #[test]
    fn attractor_point_matches_forward_orbit() {
        // push a seed forward along the preimages of the word; the landing point is the
        // attractor point up to lambda^depth
        let p = ex1();
        let depth = 40;
        let w = Itinerary::constant(1, depth, Orientation::Backward);
        let x = 0.1;
        let xs = backward_preimages(x, &w.symbols, p.l);
        let mut q = Point::new(xs[depth - 1], 0.7, -0.3);
        for i in (0..depth - 1).rev() {
            q = step(q, &p);
            q.x = xs[i];
        }
        q = step(q, &p);
        let a = attractor_point(x, &w, &p, depth).unwrap();
        assert!((q.y - a.point.y).abs() < 1e-12);
        assert!((q.z - a.point.z).abs() < 1e-12);
        assert!(a.y_error < 1e-15);
    }

    #[test]
    fn attractor_point_tail_shrinks_geometrically() {
        let p = ex2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Itinerary::backward((0..80).map(|_| rng.gen_range(1..=2)).collect());
        let y10 = attractor_point(0.3, &w, &p, 10).unwrap().point.y;
        let y20 = attractor_point(0.3, &w, &p, 20).unwrap().point.y;
        let y80 = attractor_point(0.3, &w, &p, 80).unwrap().point.y;
        assert!((y20 - y10).abs() <= p.lambda_c.powi(10) / (1.0 - p.lambda_c));
        assert!((y80 - y20).abs() <= p.lambda_c.powi(20) / (1.0 - p.lambda_c));
    }

    #[test]
    fn depth_errors() {
        let p = ex1();
        let w = Itinerary::constant(1, 5, Orientation::Backward);
        assert!(matches!(
            attractor_point(0.0, &w, &p, 6),
            Err(Error::DepthTooSmall { .. })
        ));
        assert!(matches!(
            attractor_point_tol(0.0, &w, &p, 1e-12),
            Err(Error::DepthTooSmall { .. })
        ));
    }

    #[test]
    fn trapping_region_is_forward_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for params in [ex1(), ex2()] {
            let (ymax, zmax) = params.trapping_region();
            for _ in 0..2_000 {
                let mut q = Point::new(
                    rng.gen(),
                    rng.gen_range(-ymax..=ymax),
                    rng.gen_range(-zmax..=zmax),
                );
                for _ in 0..200 {
                    q = step(q, &params);
                    assert!(q.y.abs() <= ymax && q.z.abs() <= zmax);
                    assert!((0.0..1.0).contains(&q.x));
                }
            }
        }
    }
}
