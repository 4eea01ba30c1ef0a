//! Uniform-grid spatial hash over a 2-d chart, optionally periodic in `x` with period 1.
//!
//! Atoms are stored sorted by cell key, so a cell lookup is a binary search and the grid
//! can be arbitrarily fine without allocating empty cells.

use crate::dynamics::circle_diff;

#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell_x: f64,
    cell_y: f64,
    nx: i64,
    x0: f64,
    y0: f64,
    periodic: bool,
    keys: Vec<u64>,
    pts: Vec<[f64; 2]>,
    w: Vec<f64>,
}

const NY_SPAN: i64 = 1 << 31;

impl SpatialHash {
    /// Cells are at least `cell` wide in both directions.
    pub fn new(points: &[[f64; 2]], weights: &[f64], cell: f64, periodic: bool) -> Self {
        assert!(cell > 0.0);
        let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
        let mut xmax = f64::NEG_INFINITY;
        for p in points {
            xmin = xmin.min(p[0]);
            xmax = xmax.max(p[0]);
            ymin = ymin.min(p[1]);
        }
        if points.is_empty() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
        }
        let (x0, nx, cell_x) = if periodic {
            let nx = ((1.0 / cell).floor() as i64).max(1);
            (0.0, nx, 1.0 / nx as f64)
        } else {
            let nx = (((xmax - xmin) / cell).floor() as i64 + 1).max(1);
            (xmin, nx, cell)
        };
        let mut order: Vec<(u64, usize)> = Vec::with_capacity(points.len());
        let mut hash = SpatialHash {
            cell_x,
            cell_y: cell,
            nx,
            x0,
            y0: ymin,
            periodic,
            keys: Vec::new(),
            pts: Vec::new(),
            w: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (ix, iy) = hash.cell_of(*p);
            order.push((hash.key(ix, iy), i));
        }
        order.sort_unstable();
        hash.keys = order.iter().map(|o| o.0).collect();
        hash.pts = order.iter().map(|o| points[o.1]).collect();
        hash.w = order.iter().map(|o| weights[o.1]).collect();
        hash
    }

    fn cell_of(&self, p: [f64; 2]) -> (i64, i64) {
        let ix = ((p[0] - self.x0) / self.cell_x).floor() as i64;
        let iy = ((p[1] - self.y0) / self.cell_y).floor() as i64;
        let ix = if self.periodic { ix.rem_euclid(self.nx) } else { ix };
        (ix, iy)
    }

    fn key(&self, ix: i64, iy: i64) -> u64 {
        ((ix + NY_SPAN) as u64) << 32 | ((iy + NY_SPAN) as u64 & 0xffff_ffff)
    }

    fn cell_range(&self, ix: i64, iy: i64) -> std::ops::Range<usize> {
        let k = self.key(ix, iy);
        let lo = self.keys.partition_point(|&v| v < k);
        let hi = lo + self.keys[lo..].partition_point(|&v| v == k);
        lo..hi
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    #[inline]
    fn dist2(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = if self.periodic {
            circle_diff(a[0], b[0])
        } else {
            a[0] - b[0]
        };
        let dy = a[1] - b[1];
        dx * dx + dy * dy
    }

    /// Calls `f(point, weight, distance^2)` for every atom within `r` of `c`.
    pub fn for_each_within(&self, c: [f64; 2], r: f64, mut f: impl FnMut([f64; 2], f64, f64)) {
        let reach_x = (r / self.cell_x).ceil() as i64;
        let reach_y = (r / self.cell_y).ceil() as i64;
        let (cx, cy) = self.cell_of(c);
        let r2 = r * r;
        let span_x = if self.periodic {
            // avoid visiting a column twice when the reach wraps around
            reach_x.min((self.nx - 1) / 2)
        } else {
            reach_x
        };
        let mut visited_all = false;
        if self.periodic && 2 * reach_x + 1 >= self.nx {
            visited_all = true;
        }
        let xs: Vec<i64> = if visited_all {
            (0..self.nx).collect()
        } else {
            (-span_x..=span_x)
                .map(|d| {
                    let ix = cx + d;
                    if self.periodic {
                        ix.rem_euclid(self.nx)
                    } else {
                        ix
                    }
                })
                .collect()
        };
        for ix in xs {
            for iy in (cy - reach_y)..=(cy + reach_y) {
                for i in self.cell_range(ix, iy) {
                    let d2 = self.dist2(c, self.pts[i]);
                    if d2 <= r2 {
                        f(self.pts[i], self.w[i], d2);
                    }
                }
            }
        }
    }

    /// `(mass, sum of squared weights, count)` in the closed ball `B(c, r)`.
    pub fn ball(&self, c: [f64; 2], r: f64) -> (f64, f64, usize) {
        let (mut m, mut s, mut n) = (0.0, 0.0, 0);
        self.for_each_within(c, r, |_, w, _| {
            m += w;
            s += w * w;
            n += 1;
        });
        (m, s, n)
    }

    pub fn ball_mass(&self, c: [f64; 2], r: f64) -> f64 {
        self.ball(c, r).0
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.pts
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }
}
