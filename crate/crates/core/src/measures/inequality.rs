//! Product boxes over the skew geometry, the family norm `|||.|||_r` and the decay audit
//! `|||F^n_* mu|||_r^2 <= B sigma^-n |||mu|||_{c_n r}^2 + D_n |mu|^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::empirical::{
    birkhoff_measure, lebesgue_on_curve, Atom, Chart, EmpiricalMeasure, ProjectedMeasure,
};
use super::norm::{linear_fit, r_norm_sq, Domain, Integration, NormConfig};
use crate::dynamics::{attractor_point, circle_diff, fixed_point_q, Itinerary, Orientation};
use crate::error::{Error, Result};
use crate::orbit::Jitter;
use crate::params::MapParams;
use crate::transversality::UnstableCurve;

/// `C_i = [x-cell] x [-Y, Y] x [z-slab]`, projected vertically onto the slab midplane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Boxes {
    pub x_cells: usize,
    pub z_slabs: usize,
    /// Half-height of the `y` range.
    pub y_half: f64,
    /// Enlargement used for the boxes `C~_i`.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxGeometry {
    pub x_lo: f64,
    pub x_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl Boxes {
    pub fn for_params(params: &MapParams) -> Self {
        Boxes {
            x_cells: params.l as usize,
            z_slabs: 2,
            y_half: params.trapping_region().0,
            margin: 0.05,
        }
    }

    pub fn count(&self) -> usize {
        self.x_cells * self.z_slabs
    }

    /// Bound on how many boxes `C_j` meet one enlarged box.
    pub fn s0(&self) -> usize {
        self.count()
    }

    pub fn geometry(&self, i: usize, tilde: bool) -> BoxGeometry {
        let (ix, iz) = (i % self.x_cells, i / self.x_cells);
        let wx = 1.0 / self.x_cells as f64;
        let wz = 2.0 / self.z_slabs as f64;
        let m = if tilde { self.margin } else { 0.0 };
        BoxGeometry {
            x_lo: ix as f64 * wx - m,
            x_hi: (ix + 1) as f64 * wx + m,
            z_lo: -1.0 + iz as f64 * wz - m,
            z_hi: -1.0 + (iz + 1) as f64 * wz + m,
        }
    }

    /// Projection of `mu` restricted to box `i` and the chart domain it lives on.
    pub fn project(&self, mu: &EmpiricalMeasure, i: usize, tilde: bool) -> (ProjectedMeasure, Domain) {
        let g = self.geometry(i, tilde);
        let centre = 0.5 * (g.x_lo + g.x_hi);
        let half = 0.5 * (g.x_hi - g.x_lo);
        let (mut pts, mut ws) = (Vec::new(), Vec::new());
        for a in &mu.atoms {
            let p = a.point;
            // left-closed in z, except that the top slab keeps z = 1
            let top = (g.z_hi - 1.0).abs() < 1e-15 || g.z_hi > 1.0;
            if p.z < g.z_lo || p.z > g.z_hi || (p.z == g.z_hi && !top) {
                continue;
            }
            let dx = circle_diff(p.x, centre);
            if dx < -half || dx >= half {
                continue;
            }
            pts.push([centre + dx, p.y]);
            ws.push(a.weight);
        }
        let m = if tilde { self.margin } else { 0.0 };
        let domain = Domain::rect(g.x_lo, g.x_hi, -self.y_half - m, self.y_half + m);
        let chart = Chart {
            z_level: 0.5 * (g.z_lo + g.z_hi),
            periodic_x: false,
        };
        (ProjectedMeasure::new(pts, ws, chart), domain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyNorm {
    /// `||pi_i(mu|C_i)||_{W_i, r}^2` per box.
    pub per_box_sq: Vec<f64>,
    /// `|||mu|||_r^2`, the maximum over boxes.
    pub value_sq: f64,
}

impl FamilyNorm {
    pub fn value(&self) -> f64 {
        self.value_sq.max(0.0).sqrt()
    }
}

pub fn family_norm(
    mu: &EmpiricalMeasure,
    boxes: &Boxes,
    cfg: &NormConfig,
    tilde: bool,
) -> Result<FamilyNorm> {
    let per_box_sq = (0..boxes.count())
        .map(|i| {
            let (pm, dom) = boxes.project(mu, i, tilde);
            r_norm_sq(&pm, cfg, &dom)
        })
        .collect::<Result<Vec<f64>>>()?;
    let value_sq = per_box_sq.iter().cloned().fold(0.0, f64::max);
    Ok(FamilyNorm {
        per_box_sq,
        value_sq,
    })
}

/// I.i.d. uniform atoms on the unstable leaf of the fixed point `q` (all-`q` backward word),
/// one lap in `x`.
pub fn leaf_measure(params: &MapParams, n_atoms: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let (_, sym) = fixed_point_q(params);
    let depth = 60;
    let word = Itinerary::constant(sym, depth, Orientation::Backward);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n_atoms).map(|_| rng.gen_range(0.0..1.0)).collect();
    let w = 1.0 / n_atoms.max(1) as f64;
    let atoms = xs
        .par_iter()
        .map(|&x| {
            attractor_point(x, &word, params, depth).map(|a| Atom {
                point: a.point,
                weight: w,
                iterate: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = EmpiricalMeasure::new(atoms);
    m.total_mass = 1.0;
    Ok(m)
}

/// Where the constant part `D_n |mu|^2` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FloorPolicy {
    Zero,
    Value { value: f64 },
    /// Family norm squared of a Birkhoff u-Gibbs proxy, at a radius where it resolves.
    Proxy {
        seeds: usize,
        n_iters: usize,
        r: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityConfig {
    pub r: f64,
    /// `c_n = cn_constant * lambda_c^-n`.
    pub cn_constant: f64,
    pub lhs_integration: Integration,
    pub mid_integration: Integration,
    pub debias: bool,
    pub floor: FloorPolicy,
    pub boxes: Option<Boxes>,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        InequalityConfig {
            r: 1e-5,
            cn_constant: 10.0,
            lhs_integration: Integration::ExactPairs,
            mid_integration: Integration::default(),
            debias: true,
            floor: FloorPolicy::Proxy {
                seeds: 100,
                n_iters: 10_000,
                r: 0.02,
                seed: 1,
            },
            boxes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRow {
    pub n: u32,
    pub c_n: f64,
    /// `|||F^n_* mu|||_r^2`.
    pub lhs: f64,
    /// `|||mu|||_{c_n r}^2`.
    pub mid: f64,
    pub log_ratio: Option<f64>,
    pub lhs_per_box: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub config: InequalityConfig,
    pub boxes: Boxes,
    pub n_atoms: usize,
    pub mass: f64,
    pub floor: f64,
    pub rows: Vec<InequalityRow>,
    pub usable: usize,
    /// `exp(-slope)` of `log((lhs - floor) / mid)` against `n`.
    pub sigma_hat: f64,
    pub log_b: f64,
    pub pass: bool,
}

fn floor_value(params: &MapParams, boxes: &Boxes, cfg: &InequalityConfig) -> Result<f64> {
    match cfg.floor {
        FloorPolicy::Zero => Ok(0.0),
        FloorPolicy::Value { value } => Ok(value),
        FloorPolicy::Proxy {
            seeds,
            n_iters,
            r,
            seed,
        } => {
            let (_, sym) = fixed_point_q(params);
            let word = Itinerary::constant(sym, 60, Orientation::Backward);
            let curve = UnstableCurve::from_word(0.0, &word, params, 1.0, 512)?;
            let start = lebesgue_on_curve(&curve, seeds);
            let proxy = birkhoff_measure(&start, n_iters, params, Some(Jitter::new(seed)));
            let ncfg = NormConfig {
                r,
                integration: Integration::default(),
                debias: cfg.debias,
            };
            Ok(family_norm(&proxy, boxes, &ncfg, false)?.value_sq)
        }
    }
}

pub fn main_inequality_audit(
    mu: &EmpiricalMeasure,
    params: &MapParams,
    n_list: &[u32],
    cfg: &InequalityConfig,
) -> Result<InequalityReport> {
    if !(cfg.r > 0.0) || !(cfg.cn_constant > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need r > 0 and c_n constant > 0, got {} and {}",
            cfg.r, cfg.cn_constant
        )));
    }
    let boxes = cfg.boxes.unwrap_or_else(|| Boxes::for_params(params));
    let floor = floor_value(params, &boxes, cfg)?;
    let mass_sq = mu.total_mass * mu.total_mass;
    let lhs_cfg = NormConfig {
        r: cfg.r,
        integration: cfg.lhs_integration,
        debias: cfg.debias,
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let pushed = mu.push_forward(params, n);
        let lhs_norm = family_norm(&pushed, &boxes, &lhs_cfg, false)?;
        let c_n = cfg.cn_constant * params.lambda_c.powi(-(n as i32));
        let mid_cfg = NormConfig {
            r: c_n * cfg.r,
            integration: cfg.mid_integration,
            debias: cfg.debias,
        };
        let mid = family_norm(mu, &boxes, &mid_cfg, false)?.value_sq;
        let lhs = lhs_norm.value_sq;
        let excess = lhs - floor * mass_sq;
        let log_ratio = (excess > 0.0 && mid > 0.0).then(|| (excess / mid).ln());
        rows.push(InequalityRow {
            n,
            c_n,
            lhs,
            mid,
            log_ratio,
            lhs_per_box: lhs_norm.per_box_sq,
        });
    }
    let (ns, logs): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.log_ratio.map(|v| (r.n as f64, v)))
        .unzip();
    let distinct = {
        let mut d = ns.clone();
        d.dedup();
        d.len()
    };
    if distinct < 3 {
        return Err(Error::FitDegenerate { usable: distinct });
    }
    let (slope, intercept) = linear_fit(&ns, &logs);
    let sigma_hat = (-slope).exp();
    Ok(InequalityReport {
        config: *cfg,
        boxes,
        n_atoms: mu.len(),
        mass: mu.total_mass,
        floor,
        usable: ns.len(),
        rows,
        sigma_hat,
        log_b: intercept,
        pass: sigma_hat > 1.0,
    })
}
