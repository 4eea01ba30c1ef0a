//! Unstable slopes of `F_{mu,n}` as the fixed point of the graph transform
//!
//! `T(alpha)(F p) = l^{-n} [dg_n/dx(p) + dPhi/dx(p)] + l^{-n} [lambda_c^n + dPhi/dy(p)] alpha(p)`
//!
//! evaluated along stored backward orbits. Each sample is a base point `x0` with a backward
//! word of `links * n + tail` symbols; the deformed map's inverse has no closed form in `y`,
//! so the orbit points are rebuilt forward from the far end of the word.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{alpha_uu_symbols, transversality_constant};
use crate::dynamics::{attractor_point, backward_preimages, fixed_point_q, Family, Itinerary, Point};
use crate::error::{Error, Result};
use crate::params::MapParams;

#[derive(Debug, Clone, Serialize)]
pub struct FieldConfig {
    pub n_samples: usize,
    /// Deformed-map steps per sample; 0 picks `max(3, ceil(30 / n))`.
    pub links: usize,
    /// Extra base symbols used to start the orbit and the boundary slope.
    pub tail: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Share of samples whose orbit is steered through the bump around `q`.
    pub bump_fraction: f64,
    /// Grid resolution for the sups of the deformation's derivatives.
    pub grid: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            n_samples: 4000,
            links: 0,
            tail: 40,
            tol: 1e-14,
            max_iters: 1000,
            seed: 0,
            bump_fraction: 0.5,
            grid: 400,
        }
    }
}

impl FieldConfig {
    pub fn links_for(&self, n: u32) -> usize {
        if self.links > 0 {
            self.links
        } else {
            3usize.max(30usize.div_ceil(n as usize))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    pub x0: f64,
    pub word: Vec<u8>,
}

/// Run of the deformation center's symbol placed on both sides of a link boundary.
const BUMP_RUN: usize = 7;

/// Random samples; a share of them has a run of the fixed point's symbol around one
/// link boundary, which puts that orbit point inside the bump.
pub fn generate_samples(params: &MapParams, cfg: &FieldConfig) -> Vec<FieldSample> {
    let n = params.n_power as usize;
    let links = cfg.links_for(params.n_power);
    let len = links * n + cfg.tail;
    let (q, branch) = fixed_point_q(params);
    let n_bump = (cfg.n_samples as f64 * cfg.bump_fraction).round() as usize;
    (0..cfg.n_samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut word: Vec<u8> = (0..len).map(|_| rng.gen_range(1..=params.l as u8)).collect();
            let mut x0: f64 = rng.gen();
            if i < n_bump {
                let j = rng.gen_range(1..links);
                let centre = j * n;
                let lo = centre.saturating_sub(BUMP_RUN);
                for s in word.iter_mut().take(centre + BUMP_RUN).skip(lo) {
                    *s = branch;
                }
                if centre < BUMP_RUN {
                    // the run reaches x0 itself; move x0 next to q
                    x0 = crate::dynamics::wrap(q.x + rng.gen_range(-1.0..1.0) * 1e-3);
                }
            }
            FieldSample { x0, word }
        })
        .collect()
}

/// One backward orbit of the deformed map with its link coefficients.
#[derive(Debug, Clone)]
struct Chain {
    /// `A_j` and `lambda_j` for the link from node `j+1` to node `j`.
    a: Vec<f64>,
    lam: Vec<f64>,
    boundary: f64,
    /// `l^{-n} |dPhi/dx|` and `l^{-n} |dPhi/dy|` seen along the chain.
    d1: f64,
    l1: f64,
}

fn build_chain(family: &Family, sample: &FieldSample, links: usize) -> Chain {
    let p = family.params();
    let n = p.n_power as usize;
    let scale = (p.l as f64).powi(-(p.n_power as i32));
    let pre = backward_preimages(sample.x0, &sample.word[..links * n], p.l);
    let xs: Vec<f64> = (0..=links)
        .map(|j| if j == 0 { crate::dynamics::wrap(sample.x0) } else { pre[j * n - 1] })
        .collect();
    let tail = &sample.word[links * n..];
    let start = attractor_point(xs[links], &Itinerary::backward(tail.to_vec()), p, tail.len())
        .map(|a| a.point)
        .unwrap_or(Point { x: xs[links], y: 0.0, z: 0.0 });
    let mut ys = vec![0.0; links + 1];
    ys[links] = start.y;
    let mut cur = start;
    for j in (0..links).rev() {
        cur = family.step(cur);
        cur.x = xs[j];
        ys[j] = cur.y;
    }
    let lc_n = family.lambda_c_n();
    let mut a = Vec::with_capacity(links);
    let mut lam = Vec::with_capacity(links);
    let (mut d1, mut l1): (f64, f64) = (0.0, 0.0);
    for j in 0..links {
        let (x, y) = (xs[j + 1], ys[j + 1]);
        let (px, py) = family.dphi(x, y);
        a.push(scale * (family.dg_n(x) + px));
        lam.push(scale * (lc_n + py));
        d1 = d1.max(scale * px.abs());
        l1 = l1.max(scale * py.abs());
    }
    Chain {
        a,
        lam,
        boundary: alpha_uu_symbols(xs[links], tail, p).value,
        d1,
        l1,
    }
}

/// Fixed point of the graph transform on a sample set.
#[derive(Debug, Clone, Serialize)]
pub struct DeformedField {
    pub n: u32,
    pub mu: f64,
    pub eta: f64,
    pub links: usize,
    pub iterations: usize,
    pub final_change: f64,
    /// Sup-norm change per sweep.
    pub history: Vec<f64>,
    /// Slopes at nodes `0..=links` of every sample; node 0 sits over `x0`.
    pub values: Vec<Vec<f64>>,
    /// Largest `|alpha_j - T(alpha)_j|` after the last sweep.
    pub invariance_residual: f64,
    #[serde(skip)]
    pub samples: Vec<FieldSample>,
    #[serde(skip)]
    chains: Vec<Chain>,
    /// `l^{-n} sup |dPhi/dx|` and `l^{-n} sup |dPhi/dy|` (grid and samples).
    pub d1: f64,
    pub lambda1: f64,
}

impl DeformedField {
    /// Iterates `T_{mu,n}` on `samples` until the sup change drops below `cfg.tol`.
    pub fn compute(params: &MapParams, samples: Vec<FieldSample>, cfg: &FieldConfig) -> Result<Self> {
        let family = Family::new(params);
        let links = cfg.links_for(params.n_power);
        let need = links * params.n_power as usize + 1;
        if let Some(s) = samples.iter().find(|s| s.word.len() < need) {
            return Err(Error::DepthTooSmall {
                depth: need,
                available: s.word.len(),
                tail: f64::INFINITY,
            });
        }
        let chains: Vec<Chain> = samples
            .par_iter()
            .map(|s| build_chain(&family, s, links))
            .collect();

        let scale = (params.l as f64).powi(-(params.n_power as i32));
        let (gx, gy) = family.dphi_sups(cfg.grid);
        let mut d1 = scale * gx;
        let mut lambda1 = scale * gy;
        let mut eta = scale * (family.lambda_c_n() + gy);
        for c in &chains {
            d1 = d1.max(c.d1);
            lambda1 = lambda1.max(c.l1);
            eta = c.lam.iter().fold(eta, |m, v| m.max(v.abs()));
        }
        if eta >= 1.0 {
            return Err(Error::NotContracting(eta));
        }

        let mut values: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| {
                let mut v = vec![0.0; links + 1];
                v[links] = c.boundary;
                v
            })
            .collect();
        let mut history = Vec::new();
        let mut iterations = 0;
        let mut change = f64::INFINITY;
        while change >= cfg.tol {
            if iterations == cfg.max_iters {
                return Err(Error::NoConvergence(cfg.max_iters));
            }
            // bulk-synchronous sweep: every node reads the previous sweep's values
            change = values
                .par_iter_mut()
                .zip(chains.par_iter())
                .map(|(v, c)| {
                    let old = v.clone();
                    let mut m: f64 = 0.0;
                    for j in 0..links {
                        v[j] = c.a[j] + c.lam[j] * old[j + 1];
                        m = m.max((v[j] - old[j]).abs());
                    }
                    m
                })
                .reduce(|| 0.0, f64::max);
            history.push(change);
            iterations += 1;
        }
        let invariance_residual = values
            .iter()
            .zip(&chains)
            .map(|(v, c)| {
                (0..links)
                    .map(|j| (v[j] - (c.a[j] + c.lam[j] * v[j + 1])).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        Ok(DeformedField {
            n: params.n_power,
            mu: params.mu,
            eta,
            links,
            iterations,
            final_change: change,
            history,
            values,
            invariance_residual,
            samples,
            chains,
            d1,
            lambda1,
        })
    }

    /// Slopes at the sampled base points.
    pub fn node0(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }

    /// `sup |alpha|` over all interior nodes.
    pub fn sup_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v[..self.links].iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `sup |self - other|` over the interior nodes of matching samples.
    pub fn sup_diff(&self, other: &DeformedField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a[..self.links].iter().zip(&b[..self.links]))
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }
}

/// Evidence for the perturbation bound at one `(mu, n)`.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub n: u32,
    pub mu: f64,
    pub eta: f64,
    pub sup_diff: f64,
    pub bound_rhs: f64,
    pub holds: bool,
    pub d1: f64,
    pub lambda1: f64,
    pub alpha0_sup: f64,
    pub iterations: usize,
    pub n_samples: usize,
}

/// Computes both fields on one sample set and compares `sup |alpha_mu - alpha_0|` to
/// `(D1 + Lambda1 sup|alpha_0|) / (1 - eta)`.
pub fn perturbation_audit(params: &MapParams, cfg: &FieldConfig) -> Result<PerturbationReport> {
    let samples = generate_samples(params, cfg);
    let deformed = DeformedField::compute(params, samples.clone(), cfg)?;
    let base_params = params.with_family(0.0, params.n_power)?;
    let base = DeformedField::compute(&base_params, samples, cfg)?;
    let sup_diff = deformed.sup_diff(&base);
    let alpha0_sup = base.sup_abs();
    let bound_rhs = (deformed.d1 + deformed.lambda1 * alpha0_sup) / (1.0 - deformed.eta);
    Ok(PerturbationReport {
        n: params.n_power,
        mu: params.mu,
        eta: deformed.eta,
        sup_diff,
        bound_rhs,
        holds: sup_diff <= bound_rhs,
        d1: deformed.d1,
        lambda1: deformed.lambda1,
        alpha0_sup,
        iterations: deformed.iterations,
        n_samples: cfg.n_samples,
    })
}

/// Cone width needed to contain the deformed unstable slopes, against the angle floor.
#[derive(Debug, Clone, Serialize)]
pub struct ConeMargin {
    pub mu: f64,
    pub n: u32,
    /// Fundamental-domain scale `a = lambda_ss / 20`.
    pub a: f64,
    pub omega_required: f64,
    pub theta_a: f64,
    /// `theta(a)/2 - 2 omega`; positive means the cones stay transversal.
    pub margin: f64,
}

pub fn cone_family_margin(params: &MapParams, mu: f64, n: u32, cfg: &FieldConfig) -> Result<ConeMargin> {
    let deformed_params = params.with_family(mu, n)?;
    let base_params = params.with_family(0.0, n)?;
    let samples = generate_samples(&deformed_params, cfg);
    let deformed = DeformedField::compute(&deformed_params, samples.clone(), cfg)?;
    let base = DeformedField::compute(&base_params, samples, cfg)?;
    let omega = deformed.sup_diff(&base);
    let a = params.lambda_ss / 20.0;
    let s = super::sup_bound(params) + omega;
    // atan is 1/(1+s^2)-Lipschitz from below on [-s, s]
    let theta_a = transversality_constant(a, params)? / (1.0 + s * s);
    Ok(ConeMargin {
        mu,
        n,
        a,
        omega_required: omega,
        theta_a,
        margin: theta_a / 2.0 - 2.0 * omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate_params, RawParams};

    fn params(mu: f64, n: u32) -> MapParams {
        let raw = RawParams {
            mu: Some(mu),
            n_power: Some(n),
            ..RawParams::ex1()
        };
        validate_params(&raw).unwrap()
    }

    fn small_cfg() -> FieldConfig {
        FieldConfig {
            n_samples: 300,
            grid: 200,
            ..Default::default()
        }
    }

    #[test]
    fn zero_mu_reproduces_the_series() {
        for n in [1, 3] {
            let p = params(0.0, n);
            let cfg = small_cfg();
            let samples = generate_samples(&p, &cfg);
            let f = DeformedField::compute(&p, samples.clone(), &cfg).unwrap();
            for (s, v) in samples.iter().zip(f.node0()) {
                let series = alpha_uu_symbols(s.x0, &s.word, &p).value;
                assert!((v - series).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sweeps_contract_at_rate_eta() {
        let p = params(1.0, 4);
        let f = DeformedField::compute(&p, generate_samples(&p, &small_cfg()), &small_cfg()).unwrap();
        assert!(f.eta < 1.0);
        for w in f.history.windows(2) {
            assert!(w[1] <= f.eta * w[0] * (1.0 + 1e-12) + 1e-300);
        }
        assert!(f.invariance_residual <= 1e-14);
    }

    #[test]
    fn steep_target_rate_is_not_contracting() {
        let raw = RawParams {
            mu: Some(1.0),
            n_power: Some(1),
            lambda_c_plus: Some(3.0),
            ..RawParams::ex1()
        };
        let p = validate_params(&raw).unwrap();
        let err = DeformedField::compute(&p, generate_samples(&p, &small_cfg()), &small_cfg())
            .unwrap_err();
        assert!(matches!(err, Error::NotContracting(e) if e >= 1.0));
    }

    #[test]
    fn max_iters_is_enforced() {
        let p = params(0.5, 3);
        let cfg = FieldConfig {
            max_iters: 1,
            tol: 0.0,
            ..small_cfg()
        };
        let err = DeformedField::compute(&p, generate_samples(&p, &cfg), &cfg).unwrap_err();
        assert_eq!(err, Error::NoConvergence(1));
    }

    #[test]
    fn bump_samples_reach_the_deformation() {
        let p = params(1.0, 4);
        let r = perturbation_audit(&p, &small_cfg()).unwrap();
        assert!(r.sup_diff > 0.0);
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn zero_mu_needs_no_cone() {
        let p = params(0.0, 1);
        let m = cone_family_margin(&p, 0.0, 3, &small_cfg()).unwrap();
        assert!(m.omega_required < 1e-14);
        assert!(m.margin > 0.0);
    }

    #[test]
    fn samples_are_reproducible() {
        let p = params(1.0, 4);
        assert_eq!(generate_samples(&p, &small_cfg()), generate_samples(&p, &small_cfg()));
    }
}
