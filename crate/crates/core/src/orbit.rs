//! Forward orbits and their CSV form.

use std::io::{self, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{wrap, Family, Point};
use crate::params::MapParams;

/// Perturbation of `x` added after every step.
///
/// In `f64`, doubling drops one bit of `x` per step and tripling maps dyadic grid points
/// onto a finite cycle, so long float orbits of the circle factor are not typical orbits.
/// A perturbation far below every scale of interest restores typical behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub seed: u64,
    pub amplitude: f64,
}

impl Jitter {
    pub const DEFAULT_AMPLITUDE: f64 = 1e-15;

    pub fn new(seed: u64) -> Self {
        Jitter {
            seed,
            amplitude: Self::DEFAULT_AMPLITUDE,
        }
    }
}

/// Steps either the base map or the deformed family, depending on `mu` and `n_power`.
#[derive(Debug, Clone)]
pub struct Stepper {
    family: Family,
    base: bool,
}

impl Stepper {
    pub fn new(params: &MapParams) -> Self {
        Stepper {
            family: Family::new(params),
            base: params.mu == 0.0 && params.n_power == 1,
        }
    }

    pub fn params(&self) -> &MapParams {
        self.family.params()
    }

    pub fn is_base(&self) -> bool {
        self.base
    }

    #[inline]
    pub fn step(&self, p: Point) -> Point {
        if self.base {
            crate::dynamics::step(p, self.family.params())
        } else {
            self.family.step(p)
        }
    }
}

/// An orbit source that can be advanced point by point.
pub struct OrbitIter {
    stepper: Stepper,
    current: Point,
    rng: Option<(ChaCha8Rng, f64)>,
}

impl OrbitIter {
    pub fn new(start: Point, params: &MapParams, jitter: Option<Jitter>) -> Self {
        OrbitIter {
            stepper: Stepper::new(params),
            current: start,
            rng: jitter.map(|j| (ChaCha8Rng::seed_from_u64(j.seed), j.amplitude)),
        }
    }
}

impl Iterator for OrbitIter {
    type Item = Point;

    /// Yields the current point, then advances.
    fn next(&mut self) -> Option<Point> {
        let out = self.current;
        let mut next = self.stepper.step(out);
        if let Some((rng, amp)) = self.rng.as_mut() {
            next.x = wrap(next.x + *amp * rng.gen_range(-1.0..1.0));
        }
        self.current = next;
        Some(out)
    }
}

/// `len` points starting with `start`.
pub fn orbit(start: Point, params: &MapParams, len: usize, jitter: Option<Jitter>) -> Vec<Point> {
    OrbitIter::new(start, params, jitter).take(len).collect()
}

pub fn write_orbit_csv<W: Write>(mut w: W, points: &[Point]) -> io::Result<()> {
    writeln!(w, "step,x,y,z")?;
    for (i, p) in points.iter().enumerate() {
        writeln!(w, "{},{:e},{:e},{:e}", i, p.x, p.y, p.z)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate_params, RawParams};

    #[test]
    fn orbit_length_and_start() {
        let p = validate_params(&RawParams::ex1()).unwrap();
        let o = orbit(Point::new(0.3, 0.0, 0.0), &p, 1000, None);
        assert_eq!(o.len(), 1000);
        assert_eq!(o[0], Point::new(0.3, 0.0, 0.0));
    }

    #[test]
    fn jitter_keeps_doubling_alive() {
        let p = validate_params(&RawParams::ex2()).unwrap();
        let plain = orbit(Point::new(0.3, 0.0, 0.0), &p, 200, None);
        assert_eq!(plain[199].x, 0.0);
        let j = orbit(Point::new(0.3, 0.0, 0.0), &p, 200, Some(Jitter::new(1)));
        assert!(j[150..].iter().any(|q| q.x > 0.1));
        let again = orbit(Point::new(0.3, 0.0, 0.0), &p, 200, Some(Jitter::new(1)));
        assert_eq!(j, again);
    }

    #[test]
    fn csv_header_and_rows() {
        let p = validate_params(&RawParams::ex1()).unwrap();
        let o = orbit(Point::default(), &p, 5, None);
        let mut buf = Vec::new();
        write_orbit_csv(&mut buf, &o).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,x,y,z");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn deformed_routing() {
        let mut raw = RawParams::ex1();
        raw.mu = Some(1.0);
        raw.n_power = Some(6);
        let p = validate_params(&raw).unwrap();
        assert!(!Stepper::new(&p).is_base());
        let a = Stepper::new(&p).step(Point::new(0.2, 0.1, 0.0));
        assert_eq!(a, crate::dynamics::step_deformed(Point::new(0.2, 0.1, 0.0), &p));
    }
}
