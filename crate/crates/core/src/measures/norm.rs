//! The scale-`r` bilinear form `<m1, m2>_{X,r} = r^-4 int_X m1(B(z,r)) m2(B(z,r)) dz`, its
//! norm, density estimates `J_r` and the absolute-continuity scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use super::empirical::{exact_sum, ProjectedMeasure};
use super::spatial::SpatialHash;
use crate::error::{Error, Result};

/// Integration domain `X` in an `(x, y)` chart. A periodic domain must span `x in [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Domain {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub periodic_x: bool,
}

impl Domain {
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Domain {
            x0,
            x1,
            y0,
            y1,
            periodic_x: false,
        }
    }

    pub fn unit_square() -> Self {
        Self::rect(0.0, 1.0, 0.0, 1.0)
    }

    /// `S^1 x [y0, y1]`.
    pub fn strip(y0: f64, y1: f64) -> Self {
        Domain {
            x0: 0.0,
            x1: 1.0,
            y0,
            y1,
            periodic_x: true,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Minkowski sum with a ball of radius `r` (the periodic direction is left alone).
    pub fn expanded(&self, r: f64) -> Domain {
        let (x0, x1) = if self.periodic_x {
            (self.x0, self.x1)
        } else {
            (self.x0 - r, self.x1 + r)
        };
        Domain {
            x0,
            x1,
            y0: self.y0 - r,
            y1: self.y1 + r,
            periodic_x: self.periodic_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integration {
    /// Midpoint grid with spacing `h` (`r/4` when unset). `sparse` skips nodes farther
    /// than `r` from every atom of the first measure.
    Grid { h: Option<f64>, sparse: bool },
    MonteCarlo { n: usize, seed: u64 },
    /// Closed form over the whole chart: `sum_ab w_a w_b |B(a,r) n B(b,r)| / r^4`.
    /// Ignores the boundary of `X`.
    ExactPairs,
}

impl Default for Integration {
    fn default() -> Self {
        Integration::Grid {
            h: None,
            sparse: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormConfig {
    pub r: f64,
    pub integration: Integration,
    /// Drop atom self-pairs from `<m, m>`. Unbiased for i.i.d. samples.
    pub debias: bool,
}

impl NormConfig {
    pub fn grid(r: f64) -> Self {
        NormConfig {
            r,
            integration: Integration::default(),
            debias: false,
        }
    }

    pub fn exact(r: f64) -> Self {
        NormConfig {
            r,
            integration: Integration::ExactPairs,
            debias: false,
        }
    }

    pub fn debiased(mut self) -> Self {
        self.debias = true;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    fn check(&self, x: &Domain) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParams(format!("ball radius r = {} must be positive", self.r)));
        }
        if x.periodic_x && self.r >= 0.25 {
            return Err(Error::InvalidParams(format!(
                "r = {} is above the injectivity bound 1/4 of the periodic chart",
                self.r
            )));
        }
        if let Integration::Grid { h: Some(h), .. } = self.integration {
            if !(h > 0.0) {
                return Err(Error::InvalidParams(format!("grid spacing {h} must be positive")));
            }
        }
        Ok(())
    }
}

/// Anything that can report the mass of a closed ball.
pub trait BallMass: Sync {
    /// `(mass, sum of squared atom weights)` of `B(c, r)`.
    fn ball(&self, c: [f64; 2], r: f64) -> (f64, f64);

    /// Atom locations, when the measure is atomic.
    fn support(&self) -> Option<&[[f64; 2]]> {
        None
    }
}

/// Projected measure with a spatial index.
pub struct IndexedMeasure {
    hash: SpatialHash,
    pub total_mass: f64,
}

impl IndexedMeasure {
    /// `cell` should be about the ball radius that will be queried.
    pub fn new(mu: &ProjectedMeasure, cell: f64, periodic: bool) -> Self {
        IndexedMeasure {
            hash: SpatialHash::new(&mu.points, &mu.weights, cell, periodic),
            total_mass: mu.total_mass,
        }
    }

    pub fn hash(&self) -> &SpatialHash {
        &self.hash
    }

    /// Mass-weighted mean number of atoms in `B(a, r)` over atoms `a`, estimated on at most
    /// `max_probe` atoms taken at a fixed stride.
    pub fn atoms_per_ball(&self, r: f64, max_probe: usize) -> f64 {
        let pts = self.hash.points();
        let w = self.hash.weights();
        if pts.is_empty() {
            return 0.0;
        }
        let stride = (pts.len() / max_probe.max(1)).max(1);
        let idx: Vec<usize> = (0..pts.len()).step_by(stride).collect();
        let counts: Vec<(f64, f64)> = idx
            .par_iter()
            .map(|&i| (w[i], w[i] * self.hash.ball(pts[i], r).2 as f64))
            .collect();
        let wsum = exact_sum(counts.iter().map(|c| c.0));
        if wsum <= 0.0 {
            return 0.0;
        }
        exact_sum(counts.iter().map(|c| c.1)) / wsum
    }
}

impl BallMass for IndexedMeasure {
    fn ball(&self, c: [f64; 2], r: f64) -> (f64, f64) {
        let (m, s, _) = self.hash.ball(c, r);
        (m, s)
    }

    fn support(&self) -> Option<&[[f64; 2]]> {
        Some(self.hash.points())
    }
}

/// Constant density on a rectangle; ball masses are exact disk-rectangle areas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformRect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub density: f64,
}

impl UniformRect {
    pub fn lebesgue(x: &Domain) -> Self {
        UniformRect {
            x0: x.x0,
            x1: x.x1,
            y0: x.y0,
            y1: x.y1,
            density: 1.0,
        }
    }
}

/// `int_{-r}^t sqrt(r^2 - s^2) ds` up to a constant.
fn half_chord_primitive(t: f64, r: f64) -> f64 {
    let t = t.clamp(-r, r);
    0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
}

/// Area of `{|p| <= r, p_x <= u, p_y <= v}`.
fn disk_quadrant(u: f64, v: f64, r: f64) -> f64 {
    let g = |t: f64| half_chord_primitive(t, r);
    let top = u.clamp(-r, r);
    if v <= -r || u <= -r {
        return 0.0;
    }
    if v >= r {
        return 2.0 * (g(top) - g(-r));
    }
    let ts = (r * r - v * v).sqrt();
    let mut area = 0.0;
    // outer pieces: integrand 2h when v > 0, 0 when v < 0
    let outer = |a: f64, b: f64| {
        if b <= a || v <= 0.0 {
            0.0
        } else {
            2.0 * (g(b) - g(a))
        }
    };
    area += outer(-r, top.min(-ts));
    let (a, b) = (-ts, top.min(ts));
    if b > a {
        area += v * (b - a) + g(b) - g(a);
    }
    area += outer(ts, top);
    area
}

/// Area of the disk `B(c, r)` intersected with the rectangle.
pub fn disk_rect_area(c: [f64; 2], r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (a, b) = (x0 - c[0], x1 - c[0]);
    let (lo, hi) = (y0 - c[1], y1 - c[1]);
    let a = disk_quadrant(b, hi, r) - disk_quadrant(a, hi, r) - disk_quadrant(b, lo, r)
        + disk_quadrant(a, lo, r);
    a.max(0.0)
}

impl BallMass for UniformRect {
    fn ball(&self, c: [f64; 2], r: f64) -> (f64, f64) {
        (
            self.density * disk_rect_area(c, r, self.x0, self.x1, self.y0, self.y1),
            0.0,
        )
    }
}

/// Lens area `|B(a,r) n B(b,r)|` for centres at distance `d`.
pub fn lens_area(d: f64, r: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
}

struct GridNodes {
    nodes: Vec<[f64; 2]>,
    cell_area: f64,
}

fn grid_nodes(x: &Domain, h: f64, r: f64, support: Option<&[[f64; 2]]>) -> GridNodes {
    let nx = (((x.x1 - x.x0) / h).ceil() as i64).max(1);
    let ny = (((x.y1 - x.y0) / h).ceil() as i64).max(1);
    let hx = (x.x1 - x.x0) / nx as f64;
    let hy = (x.y1 - x.y0) / ny as f64;
    let node = |i: i64, j: i64| [x.x0 + (i as f64 + 0.5) * hx, x.y0 + (j as f64 + 0.5) * hy];
    let cell_area = hx * hy;
    let Some(support) = support else {
        let nodes = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| node(i, j)))
            .collect();
        return GridNodes { nodes, cell_area };
    };
    // Blocks of at least r on a side: a node within r of an atom sits in a neighbouring
    // block. Across the periodic seam the last block may be partial, hence reach 2.
    let mx = ((r / hx).ceil() as i64).max(1);
    let my = ((r / hy).ceil() as i64).max(1);
    let (nbx, nby) = ((nx + mx - 1) / mx, (ny + my - 1) / my);
    let mut occupied: Vec<(i64, i64)> = support
        .iter()
        .map(|p| {
            let ix = ((p[0] - x.x0) / hx).floor() as i64;
            let iy = ((p[1] - x.y0) / hy).floor() as i64;
            let ix = if x.periodic_x { ix.rem_euclid(nx) } else { ix };
            (ix.div_euclid(mx), iy.div_euclid(my))
        })
        .collect();
    occupied.sort_unstable();
    occupied.dedup();
    let reach_x = if x.periodic_x { 2 } else { 1 };
    let mut blocks = Vec::with_capacity(occupied.len() * 9);
    for &(bx, by) in &occupied {
        for dx in -reach_x..=reach_x {
            let mut cx = bx + dx;
            if x.periodic_x {
                cx = cx.rem_euclid(nbx);
            } else if cx < 0 || cx >= nbx {
                continue;
            }
            for cy in (by - 1)..=(by + 1) {
                if cy >= 0 && cy < nby {
                    blocks.push((cx, cy));
                }
            }
        }
    }
    blocks.sort_unstable();
    blocks.dedup();
    let mut nodes = Vec::with_capacity(blocks.len() * (mx * my) as usize);
    for (bx, by) in blocks {
        for i in (bx * mx)..((bx + 1) * mx).min(nx) {
            for j in (by * my)..((by + 1) * my).min(ny) {
                nodes.push(node(i, j));
            }
        }
    }
    GridNodes { nodes, cell_area }
}

fn integrate_nodes(
    a: &dyn BallMass,
    b: Option<&dyn BallMass>,
    nodes: &[[f64; 2]],
    r: f64,
    debias: bool,
) -> Vec<f64> {
    nodes
        .par_iter()
        .map(|&c| {
            let (m1, s1) = a.ball(c, r);
            if m1 == 0.0 {
                return 0.0;
            }
            match b {
                Some(b) => m1 * b.ball(c, r).0,
                None if debias => m1 * m1 - s1,
                None => m1 * m1,
            }
        })
        .collect()
}

/// `b = None` means `<a, a>`.
fn inner_quadrature(
    a: &dyn BallMass,
    b: Option<&dyn BallMass>,
    cfg: &NormConfig,
    x: &Domain,
) -> Result<f64> {
    cfg.check(x)?;
    let r = cfg.r;
    let r4 = r.powi(4);
    match cfg.integration {
        Integration::Grid { h, sparse } => {
            let h = h.unwrap_or(r / 4.0);
            let support = if sparse { a.support() } else { None };
            let g = grid_nodes(x, h, r, support);
            let vals = integrate_nodes(a, b, &g.nodes, r, cfg.debias);
            Ok(exact_sum(vals.into_iter()) * g.cell_area / r4)
        }
        Integration::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidParams("Monte Carlo node count must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nodes: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.gen_range(x.x0..x.x1), rng.gen_range(x.y0..x.y1)])
                .collect();
            let vals = integrate_nodes(a, b, &nodes, r, cfg.debias);
            Ok(exact_sum(vals.into_iter()) * x.area() / n as f64 / r4)
        }
        Integration::ExactPairs => Err(Error::Unsupported(
            "exact pair integration needs atomic measures".into(),
        )),
    }
}

fn exact_pairs(a: &IndexedMeasure, b: &IndexedMeasure, r: f64, self_pairs: Option<bool>) -> f64 {
    let pa = a.hash.points();
    let wa = a.hash.weights();
    let vals: Vec<f64> = pa
        .par_iter()
        .zip(wa.par_iter())
        .map(|(&p, &w)| {
            let mut s = 0.0;
            b.hash
                .for_each_within(p, 2.0 * r, |_, wb, d2| s += wb * lens_area(d2.sqrt(), r));
            w * s
        })
        .collect();
    let mut total = exact_sum(vals.into_iter());
    if self_pairs == Some(false) {
        total -= exact_sum(wa.iter().map(|w| w * w)) * PI * r * r;
    }
    total / r.powi(4)
}

fn indexed(mu: &ProjectedMeasure, cfg: &NormConfig, x: &Domain) -> IndexedMeasure {
    let cell = match cfg.integration {
        Integration::ExactPairs => 2.0 * cfg.r,
        _ => cfg.r,
    };
    IndexedMeasure::new(mu, cell, x.periodic_x)
}

/// `<mu1, mu2>_{X,r}`.
pub fn r_inner(
    mu1: &ProjectedMeasure,
    mu2: &ProjectedMeasure,
    cfg: &NormConfig,
    x: &Domain,
) -> Result<f64> {
    cfg.check(x)?;
    let a = indexed(mu1, cfg, x);
    let b = indexed(mu2, cfg, x);
    match cfg.integration {
        Integration::ExactPairs => Ok(exact_pairs(&a, &b, cfg.r, None)),
        _ => inner_quadrature(&a, Some(&b), cfg, x),
    }
}

/// `<mu, mu>_{X,r}`, without self-pairs when `cfg.debias` is set (may then be negative).
pub fn r_norm_sq(mu: &ProjectedMeasure, cfg: &NormConfig, x: &Domain) -> Result<f64> {
    cfg.check(x)?;
    let a = indexed(mu, cfg, x);
    match cfg.integration {
        Integration::ExactPairs => Ok(exact_pairs(&a, &a, cfg.r, Some(!cfg.debias))),
        _ => inner_quadrature(&a, None, cfg, x),
    }
}

/// `||mu||_{X,r}`; a negative debiased square is clamped to zero.
pub fn r_norm(mu: &ProjectedMeasure, cfg: &NormConfig, x: &Domain) -> Result<f64> {
    Ok(r_norm_sq(mu, cfg, x)?.max(0.0).sqrt())
}

/// `<a, b>_{X,r}` for arbitrary ball-mass oracles (grid or Monte Carlo only).
pub fn r_inner_with(a: &dyn BallMass, b: &dyn BallMass, cfg: &NormConfig, x: &Domain) -> Result<f64> {
    inner_quadrature(a, Some(b), cfg, x)
}

pub fn r_norm_with(a: &dyn BallMass, cfg: &NormConfig, x: &Domain) -> Result<f64> {
    Ok(inner_quadrature(a, None, cfg, x)?.max(0.0).sqrt())
}

/// `C0` with `||nu||_{r2} <= C0 ||nu||_{r1}` for `r1 <= r2`, from covering `B(z, r2)` by
/// `N = ceil(sqrt2 r2 / r1)^2` balls of radius `r1`. Valid for whole-plane integration.
pub fn covering_constant(r1: f64, r2: f64) -> f64 {
    let n = (std::f64::consts::SQRT_2 * r2 / r1).ceil().powi(2);
    n * (r1 / r2).powi(2)
}

/// `J_r nu = nu(B(z,r)) / (pi r^2)` on a midpoint grid over `X`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub r: f64,
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `values[j * nx + i]` at node `(i, j)`.
    pub values: Vec<f64>,
    /// `L^2(X)` norm of `J_r`.
    pub l2: f64,
    /// `int J_r` over `X` expanded by `r`, which recovers the mass of atoms inside `X`.
    pub mass: f64,
}

impl DensityField {
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let hx = (self.domain.x1 - self.domain.x0) / self.nx as f64;
        let hy = (self.domain.y1 - self.domain.y0) / self.ny as f64;
        [
            self.domain.x0 + (i as f64 + 0.5) * hx,
            self.domain.y0 + (j as f64 + 0.5) * hy,
        ]
    }
}

pub fn density_estimate(
    mu: &dyn BallMass,
    r: f64,
    x: &Domain,
    grid: (usize, usize),
) -> Result<DensityField> {
    NormConfig::grid(r).check(x)?;
    let (nx, ny) = (grid.0.max(1), grid.1.max(1));
    let hx = (x.x1 - x.x0) / nx as f64;
    let hy = (x.y1 - x.y0) / ny as f64;
    let disk = PI * r * r;
    let eval = |d: &Domain, nx: usize, ny: usize| -> Vec<f64> {
        let (hx, hy) = ((d.x1 - d.x0) / nx as f64, (d.y1 - d.y0) / ny as f64);
        (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % nx, k / nx);
                let c = [d.x0 + (i as f64 + 0.5) * hx, d.y0 + (j as f64 + 0.5) * hy];
                mu.ball(c, r).0 / disk
            })
            .collect()
    };
    let values = eval(x, nx, ny);
    let l2 = (exact_sum(values.iter().map(|v| v * v)) * hx * hy).sqrt();
    let big = x.expanded(r);
    let bnx = ((big.x1 - big.x0) / hx).ceil() as usize;
    let bny = ((big.y1 - big.y0) / hy).ceil() as usize;
    let outer = eval(&big, bnx.max(1), bny.max(1));
    let cell = (big.x1 - big.x0) / bnx.max(1) as f64 * (big.y1 - big.y0) / bny.max(1) as f64;
    let mass = exact_sum(outer.into_iter()) * cell;
    Ok(DensityField {
        r,
        domain: *x,
        nx,
        ny,
        values,
        l2,
        mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanConfig {
    pub integration: Integration,
    pub debias: bool,
    /// Bounded when `max/min` of the norms over the last decade of radii is below this.
    pub bounded_ratio: f64,
    /// Minimum mean atoms per ball at the smallest radius.
    pub min_atoms_per_ball: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            integration: Integration::default(),
            debias: true,
            bounded_ratio: 2.0,
            min_atoms_per_ball: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub r: f64,
    pub norm: f64,
    pub atoms_per_ball: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub domain: Domain,
    pub config: ScanConfig,
    pub rows: Vec<ScanRow>,
    pub last_decade_ratio: f64,
    pub bounded: bool,
    /// Least-squares slope of `log ||mu||_r` against `log r`.
    pub exponent: f64,
}

/// Least-squares `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

const PROBE_ATOMS: usize = 20_000;

pub fn abs_continuity_scan(
    mu: &ProjectedMeasure,
    radii: &[f64],
    x: &Domain,
    cfg: &ScanConfig,
) -> Result<ScanReport> {
    if radii.len() < 4 {
        return Err(Error::InvalidScan(format!("need at least 4 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidScan("radii must be positive and strictly decreasing".into()));
    }
    let (r_max, r_min) = (radii[0], radii[radii.len() - 1]);
    if r_max / r_min < 10.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidScan(format!(
            "radii span {r_max}..{r_min}, less than one decade"
        )));
    }
    let probe = IndexedMeasure::new(mu, r_min, x.periodic_x);
    let starving = probe.atoms_per_ball(r_min, PROBE_ATOMS);
    if starving < cfg.min_atoms_per_ball {
        return Err(Error::AtomStarvation {
            r: r_min,
            per_ball: starving,
            required: cfg.min_atoms_per_ball,
        });
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let ncfg = NormConfig {
            r,
            integration: cfg.integration,
            debias: cfg.debias,
        };
        let norm = r_norm(mu, &ncfg, x)?;
        let atoms_per_ball = if r == r_min {
            starving
        } else {
            IndexedMeasure::new(mu, r, x.periodic_x).atoms_per_ball(r, PROBE_ATOMS)
        };
        rows.push(ScanRow {
            r,
            norm,
            atoms_per_ball,
        });
    }
    let decade: Vec<f64> = rows
        .iter()
        .filter(|row| row.r <= 10.0 * r_min * (1.0 + 1e-12))
        .map(|row| row.norm)
        .collect();
    let hi = decade.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = decade.iter().cloned().fold(f64::INFINITY, f64::min);
    let last_decade_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let logs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|row| row.norm > 0.0)
        .map(|row| (row.r.ln(), row.norm.ln()))
        .collect();
    let exponent = if logs.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        linear_fit(&xs, &ys).0
    } else {
        f64::NAN
    };
    Ok(ScanReport {
        domain: *x,
        config: *cfg,
        rows,
        last_decade_ratio,
        bounded: last_decade_ratio < cfg.bounded_ratio,
        exponent,
    })
}
