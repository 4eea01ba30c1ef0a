//! Map parameters, their key=value file format, and constraint validation.
//!
//! Both base maps share the form `(x, y, z) -> (l x, lambda_c y + g(x), lambda_ss z + h(x))`
//! on `S^1 x [-1,1]^2`. Example 1 uses piecewise-affine `g` and piecewise-constant `h` on
//! the three rectangles `[k/3, (k+1)/3)`; Example 2 uses `g(x) = sin(2 pi x)`, `h = +-1/2`
//! on the two halves of the circle and a z-flip on the second lap.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Example {
    Ex1,
    Ex2,
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "ex1" | "example1" => Ok(Example::Ex1),
            "2" | "ex2" | "example2" => Ok(Example::Ex2),
            other => Err(Error::InvalidParams(format!("unknown example `{other}`"))),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Example::Ex1 => write!(f, "1"),
            Example::Ex2 => write!(f, "2"),
        }
    }
}

/// Unvalidated parameter record. Every field is optional; missing fields take the
/// per-example defaults in [`RawParams::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub example: Option<Example>,
    pub l: Option<u32>,
    pub lambda_ss: Option<f64>,
    pub lambda_c: Option<f64>,
    pub alpha: Option<f64>,
    pub d: Option<Vec<f64>>,
    pub lambda_c_plus: Option<f64>,
    pub delta_bump: Option<f64>,
    pub mu: Option<f64>,
    pub n_power: Option<u32>,
}

pub const PARAM_KEYS: &[&str] = &[
    "example",
    "l",
    "lambda_ss",
    "lambda_c",
    "alpha",
    "lambda_c_plus",
    "delta_bump",
    "mu",
    "n_power",
    "d1",
    "d2",
    "d3",
];

impl RawParams {
    pub fn ex1() -> Self {
        RawParams {
            example: Some(Example::Ex1),
            ..Default::default()
        }
    }

    pub fn ex2() -> Self {
        RawParams {
            example: Some(Example::Ex2),
            ..Default::default()
        }
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParams(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if !PARAM_KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidParams(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        let mut raw = RawParams::default();
        for (key, value) in &map {
            raw.set(key, value)?;
        }
        Ok(raw)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidParams(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "example" => self.example = Some(value.parse()?),
            "l" => self.l = Some(num(key, value)?),
            "lambda_ss" => self.lambda_ss = Some(num(key, value)?),
            "lambda_c" => self.lambda_c = Some(num(key, value)?),
            "alpha" => self.alpha = Some(num(key, value)?),
            "lambda_c_plus" => self.lambda_c_plus = Some(num(key, value)?),
            "delta_bump" => self.delta_bump = Some(num(key, value)?),
            "mu" => self.mu = Some(num(key, value)?),
            "n_power" => self.n_power = Some(num(key, value)?),
            "d1" | "d2" | "d3" => {
                let idx = (key.as_bytes()[1] - b'1') as usize;
                let mut d = self.d.clone().unwrap_or_else(|| DEFAULT_D_EX1.to_vec());
                d[idx] = num(key, value)?;
                self.d = Some(d);
            }
            _ => return Err(Error::InvalidParams(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Fields set in `other` win over fields set in `self`.
    pub fn overlay(&self, other: &RawParams) -> RawParams {
        RawParams {
            example: other.example.or(self.example),
            l: other.l.or(self.l),
            lambda_ss: other.lambda_ss.or(self.lambda_ss),
            lambda_c: other.lambda_c.or(self.lambda_c),
            alpha: other.alpha.or(self.alpha),
            d: other.d.clone().or_else(|| self.d.clone()),
            lambda_c_plus: other.lambda_c_plus.or(self.lambda_c_plus),
            delta_bump: other.delta_bump.or(self.delta_bump),
            mu: other.mu.or(self.mu),
            n_power: other.n_power.or(self.n_power),
        }
    }

    /// Fills missing fields with the defaults of the chosen example (Ex1 if unset).
    pub fn resolve(&self) -> RawParams {
        let example = self.example.unwrap_or(Example::Ex1);
        let (l, lss, lc) = match example {
            Example::Ex1 => (3, 0.1, 0.4),
            Example::Ex2 => (2, 0.45, 0.505),
        };
        RawParams {
            example: Some(example),
            l: Some(self.l.unwrap_or(l)),
            lambda_ss: Some(self.lambda_ss.unwrap_or(lss)),
            lambda_c: Some(self.lambda_c.unwrap_or(lc)),
            alpha: Some(self.alpha.unwrap_or(0.5)),
            d: Some(self.d.clone().unwrap_or_else(|| DEFAULT_D_EX1.to_vec())),
            lambda_c_plus: Some(self.lambda_c_plus.unwrap_or(1.05)),
            delta_bump: Some(self.delta_bump.unwrap_or(0.03)),
            mu: Some(self.mu.unwrap_or(0.0)),
            n_power: Some(self.n_power.unwrap_or(1)),
        }
    }

    /// Renders the resolved record back into the key=value format.
    pub fn to_kv(&self) -> String {
        let r = self.resolve();
        let d = r.d.unwrap();
        format!(
            "example = {}\nl = {}\nlambda_ss = {}\nlambda_c = {}\nalpha = {}\nlambda_c_plus = {}\n\
             delta_bump = {}\nmu = {}\nn_power = {}\nd1 = {}\nd2 = {}\nd3 = {}\n",
            r.example.unwrap(),
            r.l.unwrap(),
            r.lambda_ss.unwrap(),
            r.lambda_c.unwrap(),
            r.alpha.unwrap(),
            r.lambda_c_plus.unwrap(),
            r.delta_bump.unwrap(),
            r.mu.unwrap(),
            r.n_power.unwrap(),
            d[0],
            d[1],
            d[2],
        )
    }
}

pub const DEFAULT_D_EX1: [f64; 3] = [-0.5, 0.0, 0.5];

/// One inequality from the parameter constraints, evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Fatal checks make validation fail; the others are reported flags.
    pub fatal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConstraintReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    fn push(&mut self, name: &str, lhs: f64, rhs: f64, holds: bool, fatal: bool) {
        self.checks.push(ConstraintCheck {
            name: name.to_string(),
            lhs,
            rhs,
            holds,
            fatal,
        });
    }

    fn lt(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, rhs, lhs < rhs, true);
    }

    fn le(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, rhs, lhs <= rhs, true);
    }

    fn gt(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, rhs, lhs > rhs, true);
    }

    fn ge(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, rhs, lhs >= rhs, true);
    }

    fn equal(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, rhs, lhs == rhs, true);
    }

    fn flag(&mut self, name: &str, lhs: f64, rhs: f64, holds: bool) {
        self.push(name, lhs, rhs, holds, false);
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.checks
            .iter()
            .filter(|c| c.fatal && !c.holds)
            .map(|c| Violation {
                name: c.name.clone(),
                lhs: c.lhs,
                rhs: c.rhs,
            })
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn h2_holds(&self) -> bool {
        self.get(H2_NAME).map(|c| c.holds).unwrap_or(false)
    }
}

pub const H2_NAME: &str = "H2: lambda_c+ / ((lambda_c-)^2 lambda_uu-) < 1";
pub const THM_C_CENTER: &str = "(lambda_c_plus)^2 / (l lambda_c) < 1";
pub const THM_C_STABLE: &str = "l lambda_ss / lambda_c_plus < 1";

/// Validated parameters. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapParams {
    pub example: Example,
    pub l: u32,
    pub lambda_ss: f64,
    pub lambda_c: f64,
    pub alpha: f64,
    /// Per-cell slopes of `g` (Ex1 only; empty for Ex2).
    pub slopes: Vec<f64>,
    /// Per-cell translations `c_i` of `g` (Ex1 only).
    pub shifts: Vec<f64>,
    /// Per-cell values `d_i` of `h`.
    pub levels: Vec<f64>,
    pub lambda_c_plus: f64,
    pub delta_bump: f64,
    pub mu: f64,
    pub n_power: u32,
    pub report: ConstraintReport,
}

/// Checks every inequality of the chosen example and returns the validated record,
/// or all fatal violations at once.
pub fn validate_params(raw: &RawParams) -> Result<MapParams> {
    let r = raw.resolve();
    let example = r.example.unwrap();
    let l = r.l.unwrap();
    let lss = r.lambda_ss.unwrap();
    let lc = r.lambda_c.unwrap();
    let alpha = r.alpha.unwrap();
    let lplus = r.lambda_c_plus.unwrap();
    let delta = r.delta_bump.unwrap();
    let mu = r.mu.unwrap();
    let n = r.n_power.unwrap();
    let lf = l as f64;

    let mut rep = ConstraintReport::default();
    rep.ge("l >= 2", lf, 2.0);
    rep.gt("lambda_ss > 0", lss, 0.0);
    rep.lt("lambda_ss < lambda_c", lss, lc);
    rep.lt("lambda_c < 1", lc, 1.0);
    rep.gt("lambda_c > 1/l", lc, 1.0 / lf);

    let (slopes, shifts, levels) = match example {
        Example::Ex1 => {
            let d = r.d.clone().unwrap();
            if d.len() != 3 {
                return Err(Error::InvalidParams(format!(
                    "Ex1 needs three levels d1..d3, got {}",
                    d.len()
                )));
            }
            rep.equal("l = 3", lf, 3.0);
            rep.gt("alpha > 0", alpha, 0.0);
            rep.lt("alpha < 1 - lambda_c", alpha, 1.0 - lc);
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            rep.le("lambda_ss + max|d_i| <= 1", lss + dmax, 1.0);
            let mut sorted = d.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let gap = sorted
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            rep.gt("min |d_i - d_j| > 2 lambda_ss", gap, 2.0 * lss);
            let slopes = vec![alpha, 0.0, -alpha];
            let shifts = slopes.iter().map(|a| -a).collect();
            (slopes, shifts, d)
        }
        Example::Ex2 => {
            rep.equal("l = 2", lf, 2.0);
            rep.lt("lambda_ss < 0.5", lss, 0.5);
            rep.gt("lambda_c > 0.5", lc, 0.5);
            rep.lt("lambda_c < 0.51", lc, 0.51);
            (Vec::new(), Vec::new(), vec![0.5, -0.5])
        }
    };

    rep.gt("lambda_c_plus > 1", lplus, 1.0);
    rep.gt("delta_bump > 0", delta, 0.0);
    rep.lt("delta_bump < 1/(10 l)", delta, 1.0 / (10.0 * lf));
    rep.ge("mu >= 0", mu, 0.0);
    rep.le("mu <= 1", mu, 1.0);
    rep.ge("n_power >= 1", n as f64, 1.0);

    // Rates of the n-th power family: the center rate ranges from lambda_c^n away from the
    // deformation to lambda_c^n + mu (lambda_c_plus - lambda_c^n) at the deformed point.
    let lc_n = lc.powi(n as i32);
    let c_minus = lc_n;
    let c_plus = lc_n + mu * (lplus - lc_n);
    let uu_minus = lf.powi(n as i32);
    let h2 = c_plus / (c_minus * c_minus * uu_minus);
    rep.flag(H2_NAME, h2, 1.0, c_minus < 1.0 && 1.0 < c_plus && h2 < 1.0);
    let tc1 = lplus * lplus / (lf * lc);
    rep.flag(THM_C_CENTER, tc1, 1.0, tc1 < 1.0);
    let tc2 = lf * lss / lplus;
    rep.flag(THM_C_STABLE, tc2, 1.0, tc2 < 1.0);

    let violations = rep.violations();
    if !violations.is_empty() {
        return Err(Error::ConstraintViolation(violations));
    }
    Ok(MapParams {
        example,
        l,
        lambda_ss: lss,
        lambda_c: lc,
        alpha,
        slopes,
        shifts,
        levels,
        lambda_c_plus: lplus,
        delta_bump: delta,
        mu,
        n_power: n,
        report: rep,
    })
}

impl MapParams {
    /// `rho = lambda_c / l`.
    pub fn rho(&self) -> f64 {
        self.lambda_c / self.l as f64
    }

    pub fn lambda_uu(&self) -> f64 {
        self.l as f64
    }

    /// Same parameters with a different deformation strength and power.
    pub fn with_family(&self, mu: f64, n_power: u32) -> Result<MapParams> {
        let mut raw = self.to_raw();
        raw.mu = Some(mu);
        raw.n_power = Some(n_power);
        validate_params(&raw)
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            example: Some(self.example),
            l: Some(self.l),
            lambda_ss: Some(self.lambda_ss),
            lambda_c: Some(self.lambda_c),
            alpha: Some(self.alpha),
            d: match self.example {
                Example::Ex1 => Some(self.levels.clone()),
                Example::Ex2 => None,
            },
            lambda_c_plus: Some(self.lambda_c_plus),
            delta_bump: Some(self.delta_bump),
            mu: Some(self.mu),
            n_power: Some(self.n_power),
        }
    }

    /// Index (0-based) of the expanding cell `[k/l, (k+1)/l)` containing `x`.
    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        let k = (x * self.l as f64).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.l as usize - 1)
        }
    }

    /// The fiber map's forcing term in y.
    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        match self.example {
            Example::Ex1 => {
                let k = self.cell(x);
                self.slopes[k] * x + self.shifts[k]
            }
            Example::Ex2 => (2.0 * PI * x).sin(),
        }
    }

    /// `dg/dx`; on Ex1 this is the cell slope.
    #[inline]
    pub fn dg(&self, x: f64) -> f64 {
        match self.example {
            Example::Ex1 => self.slopes[self.cell(x)],
            Example::Ex2 => 2.0 * PI * (2.0 * PI * x).cos(),
        }
    }

    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        self.levels[self.cell(x)]
    }

    /// Sign applied to the new z when leaving cell `k` (the Ex2 second-lap identification).
    #[inline]
    pub fn flip(&self, k: usize) -> f64 {
        match self.example {
            Example::Ex1 => 1.0,
            Example::Ex2 => {
                if k % 2 == 1 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn sup_abs_g(&self) -> f64 {
        match self.example {
            Example::Ex1 => self.alpha,
            Example::Ex2 => 1.0,
        }
    }

    pub fn sup_abs_dg(&self) -> f64 {
        match self.example {
            Example::Ex1 => self.alpha,
            Example::Ex2 => 2.0 * PI,
        }
    }

    pub fn sup_abs_h(&self) -> f64 {
        self.levels.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Half-widths `(y_max, z_max)` of the forward-invariant trapping region.
    ///
    /// Ex1 traps `[-1,1]^2`. For Ex2 `|sin| <= 1` with `lambda_c > 1/2` pushes `|y|` past 1,
    /// so the y-extent is `1 / (1 - lambda_c)`.
    pub fn trapping_region(&self) -> (f64, f64) {
        match self.example {
            Example::Ex1 => (1.0, 1.0),
            Example::Ex2 => ((1.0 / (1.0 - self.lambda_c)).max(1.0), 1.0),
        }
    }

    /// A priori bound on the unstable slope, `sup|alpha| / (lambda_uu - lambda_c)`.
    pub fn slope_sup_bound(&self) -> f64 {
        self.sup_abs_dg() / (self.lambda_uu() - self.lambda_c)
    }
}
