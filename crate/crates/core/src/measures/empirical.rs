//! Weighted atom clouds in phase space and their vertical projections.

use std::io::{self, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{wrap, Point};
use crate::orbit::{Jitter, Stepper};
use crate::params::MapParams;
use crate::transversality::UnstableCurve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub point: Point,
    pub weight: f64,
    /// Number of map applications since the atom was seeded.
    pub iterate: u32,
}

/// Finite weighted sum of Dirac masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Atom>,
    pub total_mass: f64,
}

/// Neumaier-compensated sum.
pub(crate) fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<Atom>) -> Self {
        let total_mass = exact_sum(atoms.iter().map(|a| a.weight));
        EmpiricalMeasure { atoms, total_mass }
    }

    pub fn zero() -> Self {
        EmpiricalMeasure {
            atoms: Vec::new(),
            total_mass: 0.0,
        }
    }

    /// Equal-weight atoms at the given points.
    pub fn uniform(points: &[Point]) -> Self {
        let w = 1.0 / points.len() as f64;
        let atoms = points
            .iter()
            .map(|&point| Atom {
                point,
                weight: w,
                iterate: 0,
            })
            .collect();
        let mut m = Self::new(atoms);
        m.total_mass = 1.0;
        m
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Pushes every atom through `steps` applications of the map; weights and total mass
    /// are carried over unchanged.
    pub fn push_forward(&self, params: &MapParams, steps: u32) -> EmpiricalMeasure {
        let stepper = Stepper::new(params);
        let atoms = self
            .atoms
            .par_iter()
            .map(|a| {
                let mut p = a.point;
                for _ in 0..steps {
                    p = stepper.step(p);
                }
                Atom {
                    point: p,
                    weight: a.weight,
                    iterate: a.iterate + steps,
                }
            })
            .collect();
        EmpiricalMeasure {
            atoms,
            total_mass: self.total_mass,
        }
    }

    pub fn scaled(&self, factor: f64) -> EmpiricalMeasure {
        EmpiricalMeasure::new(
            self.atoms
                .iter()
                .map(|a| Atom {
                    weight: a.weight * factor,
                    ..*a
                })
                .collect(),
        )
    }

    /// Integral of `f` against the measure.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        exact_sum(self.atoms.iter().map(|a| a.weight * f(a.point)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,z,weight")?;
        for a in &self.atoms {
            writeln!(w, "{:e},{:e},{:e},{:e}", a.point.x, a.point.y, a.point.z, a.weight)?;
        }
        Ok(())
    }
}

/// Normalized arc length on `curve`, discretized by the midpoint rule.
pub fn lebesgue_on_curve(curve: &UnstableCurve, n_atoms: usize) -> EmpiricalMeasure {
    let pts = &curve.samples;
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        let d = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2) + (w[1].z - w[0].z).powi(2))
            .sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let n = n_atoms.max(1);
    let mut seg = 0;
    let points: Vec<Point> = (0..n)
        .map(|i| {
            let s = total * (i as f64 + 0.5) / n as f64;
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            let (a, b) = (pts[seg], pts[seg + 1]);
            Point {
                x: wrap(a.x + t * (b.x - a.x)),
                y: a.y + t * (b.y - a.y),
                z: a.z + t * (b.z - a.z),
            }
        })
        .collect();
    EmpiricalMeasure::uniform(&points)
}

/// `(1/n) sum_{j<n} F^j_* m`, one atom per (seed atom, iterate).
pub fn birkhoff_measure(
    start: &EmpiricalMeasure,
    n_iters: usize,
    params: &MapParams,
    jitter: Option<Jitter>,
) -> EmpiricalMeasure {
    let stepper = Stepper::new(params);
    let n = n_iters.max(1);
    let per_seed: Vec<Vec<Atom>> = start
        .atoms
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut rng = jitter.map(|j| {
                let mut r = ChaCha8Rng::seed_from_u64(j.seed);
                r.set_stream(i as u64);
                (r, j.amplitude)
            });
            let mut p = a.point;
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                out.push(Atom {
                    point: p,
                    weight: a.weight / n as f64,
                    iterate: a.iterate + j as u32,
                });
                p = stepper.step(p);
                if let Some((r, amp)) = rng.as_mut() {
                    p.x = wrap(p.x + *amp * r.gen_range(-1.0..1.0));
                }
            }
            out
        })
        .collect();
    EmpiricalMeasure {
        atoms: per_seed.into_iter().flatten().collect(),
        total_mass: start.total_mass,
    }
}

/// Target plane of a vertical projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chart {
    pub z_level: f64,
    pub periodic_x: bool,
}

impl Chart {
    pub fn plane(z_level: f64) -> Self {
        Chart {
            z_level,
            periodic_x: true,
        }
    }
}

/// Atoms in an `(x, y)` chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedMeasure {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub total_mass: f64,
    pub chart: Chart,
}

impl ProjectedMeasure {
    pub fn new(points: Vec<[f64; 2]>, weights: Vec<f64>, chart: Chart) -> Self {
        assert_eq!(points.len(), weights.len());
        let total_mass = exact_sum(weights.iter().copied());
        ProjectedMeasure {
            points,
            weights,
            total_mass,
            chart,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> ProjectedMeasure {
        ProjectedMeasure::new(
            self.points.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
            self.chart,
        )
    }

    /// Union of atoms (same chart assumed).
    pub fn add(&self, other: &ProjectedMeasure) -> ProjectedMeasure {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        ProjectedMeasure::new(points, weights, self.chart)
    }

    pub fn restrict(&self, keep: impl Fn([f64; 2]) -> bool) -> ProjectedMeasure {
        let (points, weights): (Vec<_>, Vec<_>) = self
            .points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| keep(**p))
            .map(|(p, w)| (*p, *w))
            .unzip();
        ProjectedMeasure::new(points, weights, self.chart)
    }
}

/// Vertical projection onto `chart`; mass is carried over exactly.
pub fn project_measure(mu: &EmpiricalMeasure, chart: Chart) -> ProjectedMeasure {
    ProjectedMeasure {
        points: mu.atoms.iter().map(|a| [a.point.x, a.point.y]).collect(),
        weights: mu.atoms.iter().map(|a| a.weight).collect(),
        total_mass: mu.total_mass,
        chart,
    }
}

/// Restriction of `mu` to atoms satisfying `keep`.
pub fn restrict(mu: &EmpiricalMeasure, keep: impl Fn(&Point) -> bool) -> EmpiricalMeasure {
    EmpiricalMeasure::new(mu.atoms.iter().filter(|a| keep(&a.point)).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Itinerary;
    use crate::params::{validate_params, RawParams};

    fn ex1() -> MapParams {
        validate_params(&RawParams::ex1()).unwrap()
    }

    fn flat_curve() -> UnstableCurve {
        UnstableCurve::from_word(0.0, &Itinerary::backward(vec![2; 30]), &ex1(), 1.0, 2).unwrap()
    }

    #[test]
    fn midpoint_atoms() {
        let m = lebesgue_on_curve(&flat_curve(), 3);
        let len = flat_curve().length;
        let xs: Vec<f64> = m.atoms.iter().map(|a| a.point.x).collect();
        for (x, t) in xs.iter().zip([1.0 / 6.0, 0.5, 5.0 / 6.0]) {
            assert!((x - t * len).abs() < 1e-12);
        }
        assert!(m.atoms.iter().all(|a| a.weight == 1.0 / 3.0));
        for n in [1, 7, 1000] {
            assert_eq!(lebesgue_on_curve(&flat_curve(), n).total_mass, 1.0);
        }
    }

    #[test]
    fn midpoint_rule_converges_quadratically() {
        let c = flat_curve();
        let len = c.length;
        let f = |p: Point| (3.0 * p.x).sin();
        // exact average of sin(3x) over [0, len]
        let exact = (1.0 - (3.0 * len).cos()) / (3.0 * len);
        let e1 = (lebesgue_on_curve(&c, 50).integrate(f) - exact).abs();
        let e2 = (lebesgue_on_curve(&c, 100).integrate(f) - exact).abs();
        assert!(e2 < e1 / 3.5 && e2 < 1e-4);
    }

    #[test]
    fn push_forward_keeps_mass() {
        let m = lebesgue_on_curve(&flat_curve(), 1000);
        let pushed = m.push_forward(&ex1(), 5);
        assert_eq!(pushed.total_mass, m.total_mass);
        assert!(pushed.atoms.iter().all(|a| a.iterate == 5));
    }

    #[test]
    fn birkhoff_basics() {
        let p = ex1();
        let m = lebesgue_on_curve(&flat_curve(), 100);
        let one = birkhoff_measure(&m, 1, &p, None);
        assert_eq!(one, m);
        let n = 50;
        let mu = birkhoff_measure(&m, n, &p, None);
        assert_eq!(mu.total_mass, 1.0);
        assert!((exact_sum(mu.atoms.iter().map(|a| a.weight)) - 1.0).abs() < 1e-12);
        // telescoping: |F_* mu_n - mu_n| <= 2 sup|phi| / n
        let pushed = mu.push_forward(&p, 1);
        let phis: Vec<Box<dyn Fn(Point) -> f64>> = vec![
            Box::new(|q: Point| (2.0 * std::f64::consts::PI * q.x).sin()),
            Box::new(|q: Point| q.y),
            Box::new(|q: Point| q.z * q.y),
        ];
        for phi in &phis {
            let d = (pushed.integrate(phi) - mu.integrate(phi)).abs();
            assert!(d <= 2.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn projection_keeps_mass_and_plane_points() {
        let m = lebesgue_on_curve(&flat_curve(), 10);
        let pm = project_measure(&m, Chart::plane(0.0));
        assert_eq!(pm.total_mass, m.total_mass);
        for (a, p) in m.atoms.iter().zip(&pm.points) {
            assert_eq!([a.point.x, a.point.y], *p);
        }
    }

    #[test]
    fn projection_commutes_with_vertical_restriction() {
        let p = ex1();
        let mu = birkhoff_measure(&lebesgue_on_curve(&flat_curve(), 50), 20, &p, None);
        let inside = |q: [f64; 2]| q[0] < 0.4 && q[1] > -0.2;
        let a = project_measure(&restrict(&mu, |q| inside([q.x, q.y])), Chart::plane(0.0));
        let b = project_measure(&mu, Chart::plane(0.0)).restrict(inside);
        assert_eq!(a.points, b.points);
        assert!((a.total_mass - b.total_mass).abs() < 1e-15);
    }
}
