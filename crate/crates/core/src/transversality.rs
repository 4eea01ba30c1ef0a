//! Stable distance, stable projection and the transversality audits.
//!
//! Stable leaves of both skew models are vertical `z`-segments, so the stable holonomy is
//! the vertical projection and every audit runs in the `(x, y)` chart.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{attractor_point, step, wrap, Itinerary, Point};
use crate::error::{Error, Result};
use crate::params::{Example, MapParams};
use crate::unstable::{
    alpha_uu_symbols, example2_constants, sup_bound, transversality_constant, DeformedField,
    FieldConfig, FieldSample,
};

/// Sampled piece of an unstable leaf.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnstableCurve {
    pub basepoint: Itinerary,
    pub depth: usize,
    pub samples: Vec<Point>,
    pub length: f64,
}

impl UnstableCurve {
    /// The leaf through the points with backward word `word`, over `x in [x0, x0 + length]`.
    ///
    /// The x-range is clipped at 1 so that the curve stays inside one chart.
    pub fn from_word(
        x0: f64,
        word: &Itinerary,
        params: &MapParams,
        length: f64,
        n_samples: usize,
    ) -> Result<Self> {
        let x0 = wrap(x0);
        let length = length.min(1.0 - x0 - 1e-12).max(0.0);
        let n = n_samples.max(2);
        let depth = word.len();
        let samples = (0..n)
            .map(|i| {
                let x = x0 + length * i as f64 / (n - 1) as f64;
                attractor_point(x, word, params, depth).map(|a| a.point)
            })
            .collect::<Result<Vec<_>>>()?;
        let length = samples
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum();
        Ok(UnstableCurve {
            basepoint: word.clone(),
            depth,
            samples,
            length,
        })
    }

    /// Image under the base map; the stored word gains the leading symbol of `x0`.
    pub fn step(&self, params: &MapParams) -> UnstableCurve {
        let k = params.cell(self.samples[0].x) as u8 + 1;
        let mut symbols = vec![k];
        symbols.extend_from_slice(&self.basepoint.symbols);
        let samples: Vec<Point> = self.samples.iter().map(|p| step(*p, params)).collect();
        UnstableCurve {
            basepoint: Itinerary::backward(symbols),
            depth: self.depth + 1,
            length: self.length * params.l as f64,
            samples,
        }
    }
}

/// Reach of a local center-unstable plaque in the `(x, y)` chart.
pub const PLAQUE_REACH: f64 = 1e-9;

/// Minimal `|dz|` between points of `c1` and `c2` whose `(x, y)` footprints agree within
/// `reach`; infinite if the footprints never meet.
pub fn stable_distance(c1: &UnstableCurve, c2: &UnstableCurve, reach: f64) -> f64 {
    let mut best = f64::INFINITY;
    for p in &c1.samples {
        for q in &c2.samples {
            let dx = crate::dynamics::circle_diff(p.x, q.x);
            if dx.hypot(p.y - q.y) <= reach {
                best = best.min((p.z - q.z).abs());
            }
        }
    }
    best
}

/// Slides `p` along its stable leaf to height `target_z`.
pub fn project_stable(p: Point, target_z: f64) -> Point {
    Point {
        x: p.x,
        y: p.y,
        z: target_z,
    }
}

/// Projection of a point given in a lifted x-chart. On Ex2 each crossing of the seam
/// `x = 0` reflects `z`.
pub fn project_stable_lifted(x_lift: f64, y: f64, target_z: f64, example: Example) -> Point {
    let laps = x_lift.floor() as i64;
    let z = match example {
        Example::Ex2 if laps.rem_euclid(2) == 1 => -target_z,
        _ => target_z,
    };
    Point {
        x: wrap(x_lift),
        y,
        z,
    }
}

/// Angle between the directions `(1, a)` and `(1, b)`.
#[inline]
pub fn slope_angle(a: f64, b: f64) -> f64 {
    (a.atan() - b.atan()).abs()
}

/// One row of an (H1) audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H1Entry {
    pub epsilon: f64,
    pub n_pairs: usize,
    pub theta_hat: f64,
    pub slope_gap_min: f64,
    pub closed_form_floor: f64,
    pub pass: bool,
}

/// A close call kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub epsilon: f64,
    pub x: f64,
    pub word_a: String,
    pub word_b: String,
    pub d_ss: f64,
    pub y_gap: f64,
    pub slope_gap: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    pub example: Example,
    pub depth: usize,
    pub seed: u64,
    /// Stable distance above which Ex2 pairs are checked, and below which Ex1 pairs are
    /// judged by `C(eps)`.
    pub fundamental_domain_a: f64,
    /// Ex2 only: the two positivity constants used as floors.
    pub ex2_k: Option<f64>,
    pub ex2_k2: Option<f64>,
    pub entries: Vec<H1Entry>,
    pub worst_pairs: Vec<PairRecord>,
}

impl TransversalityReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn write_worst_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epsilon,x,word_a,word_b,d_ss,y_gap,slope_gap,angle")?;
        for r in &self.worst_pairs {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{:e},{:e}",
                r.epsilon, r.x, r.word_a, r.word_b, r.d_ss, r.y_gap, r.slope_gap, r.angle
            )?;
        }
        Ok(())
    }
}

/// Two attractor points over one `x` whose backward words first differ at index `k`.
#[derive(Debug, Clone)]
struct Pair {
    x: f64,
    a: Vec<u8>,
    b: Vec<u8>,
    d_ss: f64,
    y_gap: f64,
    slope_a: f64,
    slope_b: f64,
}

impl Pair {
    fn gap(&self) -> f64 {
        (self.slope_a - self.slope_b).abs()
    }

    fn angle(&self) -> f64 {
        slope_angle(self.slope_a, self.slope_b)
    }

    fn record(&self, epsilon: f64) -> PairRecord {
        PairRecord {
            epsilon,
            x: self.x,
            word_a: Itinerary::backward(self.a.clone()).word(),
            word_b: Itinerary::backward(self.b.clone()).word(),
            d_ss: self.d_ss,
            y_gap: self.y_gap,
            slope_gap: self.gap(),
            angle: self.angle(),
        }
    }
}

fn random_pair(params: &MapParams, depth: usize, max_prefix: usize, seed: u64, idx: u64) -> (f64, Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    let l = params.l as u8;
    let x: f64 = rng.gen();
    let a: Vec<u8> = (0..depth).map(|_| rng.gen_range(1..=l)).collect();
    let k = rng.gen_range(0..=max_prefix.min(depth - 1));
    let mut b = a.clone();
    b[k] = (a[k] - 1 + rng.gen_range(1..l)) % l + 1;
    for s in b.iter_mut().skip(k + 1) {
        *s = rng.gen_range(1..=l);
    }
    (x, a, b)
}

fn evaluate_pair(params: &MapParams, x: f64, a: Vec<u8>, b: Vec<u8>) -> Result<Pair> {
    let depth = a.len();
    let pa = attractor_point(x, &Itinerary::backward(a.clone()), params, depth)?.point;
    let pb = attractor_point(x, &Itinerary::backward(b.clone()), params, depth)?.point;
    Ok(Pair {
        x,
        d_ss: (pa.z - pb.z).abs(),
        y_gap: (pa.y - pb.y).abs(),
        slope_a: alpha_uu_symbols(x, &a, params).value,
        slope_b: alpha_uu_symbols(x, &b, params).value,
        a,
        b,
    })
}

/// `ceil(log eps_min / log lambda_ss) + 4`.
pub fn required_depth(params: &MapParams, epsilons: &[f64]) -> usize {
    let eps_min = epsilons.iter().cloned().fold(1.0, f64::min);
    (eps_min.ln() / params.lambda_ss.ln()).ceil().max(0.0) as usize + 4
}

const WORST_KEPT: usize = 20;

/// Samples `n_pairs` pairs of attractor points over a common `x` and checks the slope gap
/// of their unstable directions against the closed-form floor, for each `epsilon`.
///
/// Ex1: pairs first differ at a random index up to `floor(log eps_min / log lambda_ss)`;
/// each epsilon keeps the pairs with `d_ss > eps` and requires a slope gap `>= C(eps)`.
///
/// Ex2: pairs differ in the first symbol (the two images of the fundamental domain);
/// pairs whose projections come within `K2/2` of each other must have slope gap `>= K`.
pub fn audit_h1(
    params: &MapParams,
    epsilons: &[f64],
    n_pairs: usize,
    depth: usize,
    seed: u64,
) -> Result<TransversalityReport> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParams("empty epsilon list".into()));
    }
    let required = required_depth(params, epsilons);
    if depth < required {
        return Err(Error::InsufficientDepth { depth, required });
    }
    let eps_min = epsilons.iter().cloned().fold(1.0, f64::min);
    let max_prefix = match params.example {
        Example::Ex1 => (eps_min.ln() / params.lambda_ss.ln()).floor() as usize,
        Example::Ex2 => 0,
    };
    let pairs: Vec<Pair> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let (x, a, b) = random_pair(params, depth, max_prefix, seed, i);
            evaluate_pair(params, x, a, b)
        })
        .collect::<Result<_>>()?;

    let s = sup_bound(params);
    let ex2 = (params.example == Example::Ex2).then(|| example2_constants(params));
    let mut entries = Vec::new();
    let mut worst: Vec<PairRecord> = Vec::new();
    for &eps in epsilons {
        let (slope_floor, pool): (f64, Vec<&Pair>) = match &ex2 {
            None => (
                transversality_constant(eps, params)?,
                pairs.iter().filter(|p| p.d_ss > eps).collect(),
            ),
            Some(c) => (
                c.k,
                pairs
                    .iter()
                    .filter(|p| p.d_ss > eps && p.y_gap < c.k2 / 2.0)
                    .collect(),
            ),
        };
        let gap_min = pool.iter().map(|p| p.gap()).fold(f64::INFINITY, f64::min);
        let theta_hat = pool.iter().map(|p| p.angle()).fold(f64::INFINITY, f64::min);
        let pass = match &ex2 {
            None => gap_min >= slope_floor,
            // every pair must be either far apart in projection or transversal
            Some(c) => pairs
                .iter()
                .filter(|p| p.d_ss > eps)
                .all(|p| p.gap() >= c.k || p.y_gap >= c.k2),
        };
        let mut sorted = pool.clone();
        sorted.sort_by(|a, b| a.gap().partial_cmp(&b.gap()).unwrap());
        worst.extend(sorted.iter().take(WORST_KEPT).map(|p| p.record(eps)));
        entries.push(H1Entry {
            epsilon: eps,
            n_pairs: pool.len(),
            theta_hat,
            slope_gap_min: gap_min,
            closed_form_floor: slope_floor / (1.0 + s * s),
            pass,
        });
    }
    Ok(TransversalityReport {
        example: params.example,
        depth,
        seed,
        fundamental_domain_a: params.lambda_ss / 20.0,
        ex2_k: ex2.as_ref().map(|c| c.k),
        ex2_k2: ex2.as_ref().map(|c| c.k2),
        entries,
        worst_pairs: worst,
    })
}

/// Exhaustive Ex1 check over all pairs of depth-`depth` cylinders: the smallest slope gap
/// among pairs with truncated stable distance above `epsilon`.
#[derive(Debug, Clone, Serialize)]
pub struct ExhaustiveFloor {
    pub depth: usize,
    pub epsilon: f64,
    pub n_pairs: usize,
    pub slope_gap_min: f64,
    pub c_epsilon: f64,
    pub pass: bool,
}

pub fn exhaustive_floor(params: &MapParams, depth: usize, epsilon: f64) -> Result<ExhaustiveFloor> {
    let c = transversality_constant(epsilon, params)?;
    let words = crate::unstable::all_words(params.l, depth);
    // z and slope of a cylinder are independent of x on Ex1
    let vals: Vec<(f64, f64)> = words
        .iter()
        .map(|w| {
            let z = attractor_point(0.0, &Itinerary::backward(w.clone()), params, depth)
                .map(|a| a.point.z)
                .unwrap_or(f64::NAN);
            (z, alpha_uu_symbols(0.0, w, params).value)
        })
        .collect();
    let (count, gap) = (0..vals.len())
        .into_par_iter()
        .map(|i| {
            let mut cnt = 0usize;
            let mut g = f64::INFINITY;
            for j in (i + 1)..vals.len() {
                if (vals[i].0 - vals[j].0).abs() > epsilon {
                    cnt += 1;
                    g = g.min((vals[i].1 - vals[j].1).abs());
                }
            }
            (cnt, g)
        })
        .reduce(|| (0, f64::INFINITY), |a, b| (a.0 + b.0, a.1.min(b.1)));
    Ok(ExhaustiveFloor {
        depth,
        epsilon,
        n_pairs: count,
        slope_gap_min: gap,
        c_epsilon: c,
        pass: gap >= c,
    })
}

/// (H1) at stable distance `a` for the deformed family, with floor `theta(a)/2`.
///
/// The deformation changes only `y`, so stable distances are those of the base map and
/// only the slopes need the deformed field.
pub fn audit_h1_family(
    params: &MapParams,
    a: f64,
    n_pairs: usize,
    seed: u64,
    cfg: &FieldConfig,
) -> Result<H1Entry> {
    let links = cfg.links_for(params.n_power);
    let depth = links * params.n_power as usize + cfg.tail;
    let required = required_depth(params, &[a]);
    if depth < required {
        return Err(Error::InsufficientDepth { depth, required });
    }
    let max_prefix = (a.ln() / params.lambda_ss.ln()).floor() as usize;
    let pairs: Vec<Pair> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let (x, wa, wb) = random_pair(params, depth, max_prefix, seed, i);
            evaluate_pair(params, x, wa, wb)
        })
        .collect::<Result<_>>()?;
    let kept: Vec<&Pair> = pairs.iter().filter(|p| p.d_ss > a).collect();
    let samples: Vec<FieldSample> = kept
        .iter()
        .flat_map(|p| {
            [
                FieldSample { x0: p.x, word: p.a.clone() },
                FieldSample { x0: p.x, word: p.b.clone() },
            ]
        })
        .collect();
    let field = DeformedField::compute(params, samples, cfg)?;
    let slopes = field.node0();
    let (mut gap_min, mut theta_hat) = (f64::INFINITY, f64::INFINITY);
    for pair in slopes.chunks(2) {
        gap_min = gap_min.min((pair[0] - pair[1]).abs());
        theta_hat = theta_hat.min(slope_angle(pair[0], pair[1]));
    }
    let s = sup_bound(params).max(field.sup_abs());
    let theta_a = transversality_constant(a, params)? / (1.0 + s * s);
    Ok(H1Entry {
        epsilon: a,
        n_pairs: kept.len(),
        theta_hat,
        slope_gap_min: gap_min,
        closed_form_floor: theta_a / 2.0,
        pass: theta_hat >= theta_a / 2.0,
    })
}
