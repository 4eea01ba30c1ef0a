//! The deformed family `F_{mu,n}`: the `n`-th power of the base map plus a bump-supported
//! change of the center rate around a fixed point `q`.

use super::{circle_diff, step, wrap, Point};
use crate::params::{Example, MapParams};

/// Smooth step: 0 for `s <= 0`, 1 for `s >= 1`.
fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

fn smooth_step_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let t = 1.0 - s;
    let a = (-1.0 / s).exp();
    let b = (-1.0 / t).exp();
    let da = a / (s * s);
    let db = b / (t * t);
    (da * b + a * db) / ((a + b) * (a + b))
}

/// Radial bump: 1 on `|u| <= delta/3`, 0 on `|u| >= 2 delta/3`, `C^inf` in between.
pub fn bump_psi1(u: [f64; 2], delta: f64) -> f64 {
    let r = u[0].hypot(u[1]);
    smooth_step((2.0 * delta / 3.0 - r) / (delta / 3.0))
}

/// Gradient of [`bump_psi1`].
pub fn bump_grad(u: [f64; 2], delta: f64) -> [f64; 2] {
    let r = u[0].hypot(u[1]);
    if r <= delta / 3.0 || r >= 2.0 * delta / 3.0 {
        return [0.0, 0.0];
    }
    let dr = -smooth_step_deriv((2.0 * delta / 3.0 - r) / (delta / 3.0)) * 3.0 / delta;
    [dr * u[0] / r, dr * u[1] / r]
}

/// Measured `sup |grad psi_1|` for radius `delta`, from a fine radial scan.
///
/// The bump has to fall by 1 over a width of `delta/3`, so this is at least `3/delta`;
/// for this profile it is `6/delta`.
pub fn bump_c1_norm(delta: f64) -> f64 {
    let m = 20_000;
    (0..=m)
        .map(|i| {
            let r = delta / 3.0 + delta / 3.0 * i as f64 / m as f64;
            let g = bump_grad([r, 0.0], delta);
            g[0].abs()
        })
        .fold(0.0, f64::max)
}

/// Fixed point of the base map used as the deformation center, and its branch.
///
/// Ex1 uses the fixed point of the flat branch 2, Ex2 the fixed point `x = 0` of branch 1.
pub fn fixed_point_q(params: &MapParams) -> (Point, u8) {
    let branch: u8 = match params.example {
        Example::Ex1 => 2,
        Example::Ex2 => 1,
    };
    let k = (branch - 1) as f64;
    let lf = params.l as f64;
    // x = (x + k) / l
    let x = k / (lf - 1.0);
    let y = params.g(x) / (1.0 - params.lambda_c);
    let ki = branch as usize - 1;
    let s = params.flip(ki);
    let z = s * params.levels[ki] / (1.0 - s * params.lambda_ss);
    (Point { x: wrap(x), y, z }, branch)
}

/// The map `F_{mu,n}` with its deformation precomputed.
#[derive(Debug, Clone)]
pub struct Family {
    params: MapParams,
    q: Point,
    a_q: f64,
    lc_n: f64,
    gain: f64,
}

impl Family {
    pub fn new(params: &MapParams) -> Self {
        let (q, _) = fixed_point_q(params);
        // unstable slope at a fixed point: the series collapses to a geometric sum
        let a_q = params.dg(q.x) / (params.l as f64 - params.lambda_c);
        let lc_n = params.lambda_c.powi(params.n_power as i32);
        Family {
            params: params.clone(),
            q,
            a_q,
            lc_n,
            gain: params.mu * (params.lambda_c_plus - lc_n),
        }
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn q(&self) -> Point {
        self.q
    }

    /// Unstable slope at `q`.
    pub fn a_q(&self) -> f64 {
        self.a_q
    }

    pub fn n(&self) -> u32 {
        self.params.n_power
    }

    pub fn lambda_c_n(&self) -> f64 {
        self.lc_n
    }

    /// Affine chart sending `q` to 0, `E^uu(q)` to `e_1` and `E^c(q)` to `e_2`.
    #[inline]
    pub fn chart(&self, x: f64, y: f64) -> [f64; 2] {
        let dx = circle_diff(x, self.q.x);
        [dx, (y - self.q.y) - self.a_q * dx]
    }

    #[inline]
    pub fn phi(&self, x: f64, y: f64) -> f64 {
        if self.gain == 0.0 {
            return 0.0;
        }
        let u = self.chart(x, y);
        self.gain * bump_psi1(u, self.params.delta_bump) * (y - self.q.y)
    }

    /// `(dPhi/dx, dPhi/dy)` by the chain rule through the chart.
    #[inline]
    pub fn dphi(&self, x: f64, y: f64) -> (f64, f64) {
        if self.gain == 0.0 {
            return (0.0, 0.0);
        }
        let u = self.chart(x, y);
        self.dphi_chart(u)
    }

    fn dphi_chart(&self, u: [f64; 2]) -> (f64, f64) {
        let d = self.params.delta_bump;
        let psi = bump_psi1(u, d);
        let gr = bump_grad(u, d);
        let dy = u[1] + self.a_q * u[0];
        (
            self.gain * dy * (gr[0] - self.a_q * gr[1]),
            self.gain * (psi + dy * gr[1]),
        )
    }

    /// Sups of `|dPhi/dx|` and `|dPhi/dy|` over the bump support, from an `m x m` grid in
    /// chart coordinates.
    pub fn dphi_sups(&self, m: usize) -> (f64, f64) {
        let r = 2.0 * self.params.delta_bump / 3.0;
        let mut sx: f64 = 0.0;
        let mut sy: f64 = self.gain.abs();
        for i in 0..=m {
            for j in 0..=m {
                let u = [
                    -r + 2.0 * r * i as f64 / m as f64,
                    -r + 2.0 * r * j as f64 / m as f64,
                ];
                let (a, b) = self.dphi_chart(u);
                sx = sx.max(a.abs());
                sy = sy.max(b.abs());
            }
        }
        (sx, sy)
    }

    /// `g_n(x) = sum_j lambda_c^{n-j-1} g(tau^j x)`.
    pub fn g_n(&self, x: f64) -> f64 {
        let p = &self.params;
        let mut x = x;
        let mut acc = 0.0;
        for _ in 0..p.n_power {
            acc = p.lambda_c * acc + p.g(x);
            x = wrap(p.l as f64 * x);
        }
        acc
    }

    /// `dg_n/dx = sum_j lambda_c^{n-j-1} g'(tau^j x) l^j`.
    pub fn dg_n(&self, x: f64) -> f64 {
        let p = &self.params;
        let lf = p.l as f64;
        let mut x = x;
        let mut acc = 0.0;
        let mut lj = 1.0;
        for _ in 0..p.n_power {
            acc = p.lambda_c * acc + p.dg(x) * lj;
            lj *= lf;
            x = wrap(lf * x);
        }
        acc
    }

    /// Central derivative `dy'/dy` at `p`.
    pub fn central_derivative(&self, p: Point) -> f64 {
        self.lc_n + self.dphi(p.x, p.y).1
    }

    #[inline]
    pub fn step(&self, p: Point) -> Point {
        let mut out = p;
        for _ in 0..self.params.n_power {
            out = step(out, &self.params);
        }
        out.y += self.phi(p.x, p.y);
        out
    }
}

/// One step of `F_{mu,n}`.
pub fn step_deformed(p: Point, params: &MapParams) -> Point {
    Family::new(params).step(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_n;
    use crate::params::{validate_params, RawParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn family(example: Example, mu: f64, n: u32) -> Family {
        let mut raw = match example {
            Example::Ex1 => RawParams::ex1(),
            Example::Ex2 => RawParams::ex2(),
        };
        raw.mu = Some(mu);
        raw.n_power = Some(n);
        Family::new(&validate_params(&raw).unwrap())
    }

    #[test]
    fn bump_profile() {
        let d = 0.03;
        assert_eq!(bump_psi1([0.0, 0.0], d), 1.0);
        assert_eq!(bump_psi1([d, 0.0], d), 0.0);
        assert_eq!(bump_psi1([0.0, 2.0 * d / 3.0], d), 0.0);
        let mut prev = 1.0;
        for i in 1..1000 {
            let r = d / 3.0 + d / 3.0 * i as f64 / 1000.0;
            let v = bump_psi1([r * 0.6, r * 0.8], d);
            // within ~3% of the inner edge 1 - psi drops below f64 resolution
            if (30..998).contains(&i) {
                assert!(v > 0.0 && v < 1.0);
                assert!(v < prev);
            }
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn bump_gradient_matches_finite_difference() {
        let d = 0.03;
        let h = 1e-7;
        for &(a, b) in &[(0.012, 0.003), (-0.005, 0.011), (0.0, -0.015)] {
            let g = bump_grad([a, b], d);
            let fx = (bump_psi1([a + h, b], d) - bump_psi1([a - h, b], d)) / (2.0 * h);
            let fy = (bump_psi1([a, b + h], d) - bump_psi1([a, b - h], d)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-5 * (1.0 + fx.abs()));
            assert!((g[1] - fy).abs() < 1e-5 * (1.0 + fy.abs()));
        }
    }

    #[test]
    fn bump_slope_is_six_over_delta() {
        let d = 0.03;
        let c1 = bump_c1_norm(d);
        assert!(c1 >= 3.0 / d);
        assert!((c1 - 6.0 / d).abs() < 1e-3 * c1);
    }

    #[test]
    fn fixed_points() {
        for ex in [Example::Ex1, Example::Ex2] {
            let f = family(ex, 0.0, 1);
            let q = f.q();
            let image = step(q, f.params());
            assert!((image.x - q.x).abs() < 1e-15);
            assert!((image.y - q.y).abs() < 1e-15);
            assert!((image.z - q.z).abs() < 1e-15);
        }
        assert_eq!(family(Example::Ex1, 0.0, 1).a_q(), 0.0);
    }

    #[test]
    fn zero_mu_is_the_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for ex in [Example::Ex1, Example::Ex2] {
            for n in [1, 3, 6] {
                let f = family(ex, 0.0, n);
                for _ in 0..1000 {
                    let p = Point::new(rng.gen(), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let a = f.step(p);
                    let b = step_n(p, f.params(), n);
                    assert!((a.x - b.x).abs() < 1e-10);
                    assert!((a.y - b.y).abs() < 1e-10);
                    assert!((a.z - b.z).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn closed_form_g_n() {
        let f = family(Example::Ex2, 0.0, 4);
        let x = 0.137;
        let direct = step_n(Point::new(x, 0.0, 0.0), f.params(), 4).y;
        assert!((f.g_n(x) - direct).abs() < 1e-14);
        let h = 1e-7;
        let fd = (f.g_n(x + h) - f.g_n(x - h)) / (2.0 * h);
        assert!((f.dg_n(x) - fd).abs() < 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn central_rate_at_q_interpolates() {
        for mu in [0.0, 0.25, 0.5, 1.0] {
            let f = family(Example::Ex1, mu, 2);
            let q = f.q();
            let lc2 = 0.4f64.powi(2);
            let expected = lc2 + mu * (1.05 - lc2);
            assert!((f.central_derivative(q) - expected).abs() < 1e-14);
            let h = 1e-6;
            let fd = (f.step(Point { y: q.y + h, ..q }).y - f.step(Point { y: q.y - h, ..q }).y)
                / (2.0 * h);
            assert!(((fd - expected) / expected).abs() < 1e-6);
        }
        assert!((family(Example::Ex1, 1.0, 3).central_derivative(family(Example::Ex1, 1.0, 3).q()) - 1.05).abs() < 1e-14);
    }

    #[test]
    fn outside_the_bump_nothing_changes() {
        let f = family(Example::Ex1, 1.0, 2);
        let p = Point::new(0.5 + 0.021, 0.0, 0.1);
        assert_eq!(f.step(p), step_n(p, f.params(), 2));
    }

    #[test]
    fn dphi_matches_finite_difference() {
        let f = family(Example::Ex2, 1.0, 3);
        let q = f.q();
        let (x, y) = (wrap(q.x - 0.006), q.y + 0.004);
        let h = 1e-8;
        let (ax, ay) = f.dphi(x, y);
        let fx = (f.phi(x + h, y) - f.phi(x - h, y)) / (2.0 * h);
        let fy = (f.phi(x, y + h) - f.phi(x, y - h)) / (2.0 * h);
        assert!((ax - fx).abs() < 1e-5 * (1.0 + fx.abs()));
        assert!((ay - fy).abs() < 1e-5 * (1.0 + fy.abs()));
    }
}
