//! Unstable slope fields: the explicit series for the base maps and the fixed point of the
//! graph-transform operator for the deformed family.

mod deformed;

pub use deformed::{
    cone_family_margin, perturbation_audit, ConeMargin, DeformedField, FieldConfig,
    FieldSample, PerturbationReport,
};

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{backward_preimages, wrap, Itinerary};
use crate::error::{Error, Result};
use crate::params::{Example, MapParams};

/// `alpha = dg/dx` at a preimage `x` lying in cell `k`.
#[inline]
pub fn alpha_at(x: f64, k: usize, params: &MapParams) -> f64 {
    match params.example {
        Example::Ex1 => params.slopes[k],
        Example::Ex2 => 2.0 * PI * (2.0 * PI * x).cos(),
    }
}

/// A truncated series value with its tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub tail: f64,
}

/// `sup |alpha| / (lambda_uu - lambda_c)`, an a-priori bound on `|alpha^uu|`.
pub fn sup_bound(params: &MapParams) -> f64 {
    params.slope_sup_bound()
}

/// `alpha^uu = sum_{j<depth} l^{-1} rho^j alpha(x_{-(j+1)})` for the point over `x` with
/// the given backward word.
pub fn alpha_uu_series(
    x: f64,
    backward: &Itinerary,
    params: &MapParams,
    depth: usize,
) -> Result<SeriesValue> {
    if depth == 0 || depth > backward.len() {
        return Err(Error::DepthTooSmall {
            depth,
            available: backward.len(),
            tail: f64::INFINITY,
        });
    }
    Ok(alpha_uu_symbols(x, &backward.symbols[..depth], params))
}

/// Series over the full slice, no length checks.
pub fn alpha_uu_symbols(x: f64, backward: &[u8], params: &MapParams) -> SeriesValue {
    let lf = params.l as f64;
    let rho = params.rho();
    let mut value = 0.0;
    let mut pow = 1.0 / lf;
    match params.example {
        Example::Ex1 => {
            for &b in backward {
                value += pow * params.slopes[(b - 1) as usize];
                pow *= rho;
            }
        }
        Example::Ex2 => {
            for (i, xi) in backward_preimages(x, backward, params.l).into_iter().enumerate() {
                value += pow * alpha_at(xi, (backward[i] - 1) as usize, params);
                pow *= rho;
            }
        }
    }
    // pow = l^{-1} rho^depth here
    SeriesValue {
        value,
        tail: params.sup_abs_dg() * pow / (1.0 - rho),
    }
}

/// `|alpha^uu(F p) - (alpha(p)/l + rho alpha^uu(p))|` with both sides truncated at `depth`.
pub fn recursion_residual(x: f64, backward: &Itinerary, params: &MapParams, depth: usize) -> Result<f64> {
    let here = alpha_uu_series(x, backward, params, depth)?;
    let x = wrap(x);
    let k = params.cell(x);
    let mut next_word = Vec::with_capacity(depth);
    next_word.push(k as u8 + 1);
    next_word.extend_from_slice(&backward.symbols[..depth - 1]);
    let xf = wrap(params.l as f64 * x);
    let there = alpha_uu_symbols(xf, &next_word, params).value;
    let lf = params.l as f64;
    Ok((there - (alpha_at(x, k, params) / lf + params.rho() * here.value)).abs())
}

/// `(1, alpha^uu, 0)`, unnormalized.
pub fn unstable_vector(
    x: f64,
    backward: &Itinerary,
    params: &MapParams,
    depth: usize,
) -> Result<[f64; 3]> {
    let a = alpha_uu_series(x, backward, params, depth)?;
    Ok([1.0, a.value, 0.0])
}

/// Slope values on the depth-`d` backward cylinders.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeField {
    pub depth: usize,
    pub sup_bound: f64,
    /// Base point the Ex2 series is evaluated over; irrelevant for Ex1.
    pub x: f64,
    pub words: Vec<Itinerary>,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// All `l^depth` backward words in lexicographic order.
pub fn all_words(l: u32, depth: usize) -> Vec<Vec<u8>> {
    let count = (l as usize).pow(depth as u32);
    (0..count)
        .map(|mut idx| {
            let mut w = vec![0u8; depth];
            for slot in w.iter_mut().rev() {
                *slot = (idx % l as usize) as u8 + 1;
                idx /= l as usize;
            }
            w
        })
        .collect()
}

impl SlopeField {
    /// Evaluates the series on every depth-`depth` cylinder.
    pub fn cylinders(params: &MapParams, depth: usize, x: f64) -> Result<SlopeField> {
        if depth == 0 || depth > 16 {
            return Err(Error::InvalidParams(format!(
                "cylinder depth must lie in 1..=16, got {depth}"
            )));
        }
        let words = all_words(params.l, depth);
        let pairs: Vec<(f64, f64)> = words
            .par_iter()
            .map(|w| {
                let it = Itinerary::backward(w.clone());
                let v = alpha_uu_symbols(x, w, params).value;
                let r = recursion_residual(x, &it, params, depth).unwrap_or(f64::NAN);
                (v, r)
            })
            .collect();
        Ok(SlopeField {
            depth,
            sup_bound: sup_bound(params),
            x,
            words: words.into_iter().map(Itinerary::backward).collect(),
            values: pairs.iter().map(|p| p.0).collect(),
            residuals: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// `sup_bound * rho^depth`.
    pub fn tail(&self, params: &MapParams) -> f64 {
        self.sup_bound * params.rho().powi(self.depth as i32)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "cylinder_word,alpha_uu,residual")?;
        for ((word, v), r) in self.words.iter().zip(&self.values).zip(&self.residuals) {
            writeln!(w, "{},{:e},{:e}", word.word(), v, r)?;
        }
        Ok(())
    }
}

/// Lower bound `C(eps)` on the slope gap between unstable curves whose stable
/// distance exceeds `eps` (Ex1 only, needs `rho < 1/3`).
pub fn transversality_constant(epsilon: f64, params: &MapParams) -> Result<f64> {
    if params.example != Example::Ex1 {
        return Err(Error::Unsupported(
            "the closed-form slope-gap bound is defined for Example 1".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let rho = params.rho();
    if rho >= 1.0 / 3.0 {
        return Err(Error::InvalidRho(rho));
    }
    let expo = epsilon.ln() / params.lambda_ss.ln();
    Ok(rho.powf(expo) * params.alpha * (1.0 - 3.0 * rho) / (params.lambda_uu() * (1.0 - rho)))
}

/// The two positivity constants of the Example 2 transversality argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ex2Constants {
    pub k: f64,
    pub k2: f64,
    pub k_positive: bool,
    pub k2_positive: bool,
    /// How the bare rate symbol in `K` was read.
    pub lambda_reading: &'static str,
}

pub fn example2_constants(params: &MapParams) -> Ex2Constants {
    let lam = params.lambda_c;
    let k = 2.0
        * PI
        * ((2.0 * PI / 5.0).cos()
            - lam / 4.0 * ((PI / 5.0).cos() + (PI / 2.0 - PI / 5.0).cos())
            - lam * lam / 4.0 * 2.0 / (2.0 - lam));
    let k2 = 2.0
        * ((2.0 * PI / 5.0).sin() - lam * (3.0 * PI / 10.0).sin() - lam * lam / (1.0 - lam));
    Ex2Constants {
        k,
        k2,
        k_positive: k > 0.0,
        k2_positive: k2 > 0.0,
        lambda_reading: "lambda = lambda_c",
    }
}
