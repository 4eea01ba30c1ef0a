//! Time averages over a grid of initial conditions, clustered to count physical measures.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{wrap, Point};
use crate::error::{Error, Result};
use crate::orbit::{Jitter, Stepper};
use crate::params::{MapParams, RawParams};

type Observable = Box<dyn Fn(Point) -> f64 + Send + Sync>;

/// Test functions with sup norm at most 1 on the trapping region.
pub struct ObservableDictionary {
    pub names: Vec<String>,
    funcs: Vec<Observable>,
}

impl std::fmt::Debug for ObservableDictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObservableDictionary")
            .field("names", &self.names)
            .finish()
    }
}

impl ObservableDictionary {
    pub fn new(entries: Vec<(String, Observable)>) -> Self {
        let (names, funcs) = entries.into_iter().unzip();
        ObservableDictionary { names, funcs }
    }

    /// `{sin 2 pi x, cos 2 pi x, y, y^2, z, y z}`, with `y` scaled by the trapping height.
    pub fn standard(params: &MapParams) -> Self {
        let ys = 1.0 / params.trapping_region().0;
        let entries: Vec<(&str, Observable)> = vec![
            ("sin2pix", Box::new(|p: Point| (2.0 * PI * p.x).sin())),
            ("cos2pix", Box::new(|p: Point| (2.0 * PI * p.x).cos())),
            ("y", Box::new(move |p: Point| p.y * ys)),
            ("y2", Box::new(move |p: Point| (p.y * ys).powi(2))),
            ("z", Box::new(|p: Point| p.z)),
            ("yz", Box::new(move |p: Point| p.y * ys * p.z)),
        ];
        Self::new(entries.into_iter().map(|(n, f)| (n.to_string(), f)).collect())
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn eval(&self, p: Point, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.funcs) {
            *o += f(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BirkhoffAverages {
    /// Averages over iterates `burn_in..n_iters`.
    pub averages: Vec<f64>,
    /// Averages over the first half of that window.
    pub half: Vec<f64>,
    /// `max_i |half_i - averages_i|`.
    pub gap: f64,
}

/// Jitter stream `stream` of `seed`; `None` disables it.
fn jitter_rng(jitter: Option<Jitter>, stream: u64) -> Option<(ChaCha8Rng, f64)> {
    jitter.map(|j| {
        let mut r = ChaCha8Rng::seed_from_u64(j.seed);
        r.set_stream(stream);
        (r, j.amplitude)
    })
}

fn averages_with(
    p0: Point,
    dict: &ObservableDictionary,
    n_iters: usize,
    burn_in: usize,
    stepper: &Stepper,
    mut rng: Option<(ChaCha8Rng, f64)>,
) -> BirkhoffAverages {
    let k = dict.len();
    let window = n_iters - burn_in;
    let mid = burn_in + window / 2;
    let mut sum = vec![0.0; k];
    let mut half = vec![0.0; k];
    let mut p = p0;
    for i in 0..n_iters {
        if i >= burn_in {
            dict.eval(p, &mut sum);
        }
        if i + 1 == mid {
            half.copy_from_slice(&sum);
        }
        p = stepper.step(p);
        if let Some((r, amp)) = rng.as_mut() {
            p.x = wrap(p.x + *amp * r.gen_range(-1.0..1.0));
        }
    }
    let hn = (mid - burn_in).max(1) as f64;
    let averages: Vec<f64> = sum.iter().map(|s| s / window as f64).collect();
    let half: Vec<f64> = half.iter().map(|s| s / hn).collect();
    let gap = averages
        .iter()
        .zip(&half)
        .map(|(a, h)| (a - h).abs())
        .fold(0.0, f64::max);
    BirkhoffAverages {
        averages,
        half,
        gap,
    }
}

fn check_window(n_iters: usize, burn_in: usize) -> Result<()> {
    if n_iters < 10 * burn_in || n_iters <= burn_in + 1 {
        return Err(Error::InvalidParams(format!(
            "n_iters = {n_iters} must be at least 10 burn_in = {}",
            10 * burn_in
        )));
    }
    Ok(())
}

pub fn birkhoff_averages(
    p0: Point,
    dict: &ObservableDictionary,
    n_iters: usize,
    burn_in: usize,
    params: &MapParams,
    jitter: Option<Jitter>,
) -> Result<BirkhoffAverages> {
    check_window(n_iters, burn_in)?;
    Ok(averages_with(
        p0,
        dict,
        n_iters,
        burn_in,
        &Stepper::new(params),
        jitter_rng(jitter, 0),
    ))
}

/// Cell-centred grid of initial conditions over `S^1 x [-y_half, y_half] x [-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub y_half: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, params: &MapParams) -> Self {
        GridSpec {
            nx,
            ny,
            nz,
            y_half: params.trapping_region().0,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `idx` with `x` fastest; also returns the index of its `(x, y)` column.
    pub fn point(&self, idx: usize) -> (Point, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        let c = |m: usize, n: usize| (m as f64 + 0.5) / n as f64;
        (
            Point {
                x: c(i, self.nx),
                y: -self.y_half + 2.0 * self.y_half * c(j, self.ny),
                z: -1.0 + 2.0 * c(k, self.nz),
            },
            i + self.nx * j,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    pub cluster_tol: f64,
    pub seed: u64,
    /// Jitter amplitude; zero disables it.
    pub jitter: f64,
}

impl Default for BasinConfig {
    fn default() -> Self {
        BasinConfig {
            n_iters: 100_000,
            burn_in: 1_000,
            cluster_tol: 1e-2,
            seed: 0,
            jitter: Jitter::DEFAULT_AMPLITUDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPointResult {
    pub p0: Point,
    pub averages: Vec<f64>,
    pub gap: f64,
    /// `None` when unresolved.
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinReport {
    pub schema: u32,
    pub params_echo: RawParams,
    pub grid: GridSpec,
    pub config: BasinConfig,
    pub observables: Vec<String>,
    pub n_points: usize,
    pub k_clusters: usize,
    /// Mean average-vector per cluster, largest basin first.
    pub cluster_centers: Vec<Vec<f64>>,
    pub basin_fractions: Vec<f64>,
    pub unresolved_fraction: f64,
    #[serde(skip)]
    pub points: Vec<GridPointResult>,
}

impl BasinReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let k = self.observables.len();
        let avg: Vec<String> = (1..=k).map(|i| format!("avg_{i}")).collect();
        writeln!(w, "x0,y0,z0,{},conv_gap,cluster_id", avg.join(","))?;
        for p in &self.points {
            let vals: Vec<String> = p.averages.iter().map(|v| format!("{v:e}")).collect();
            let id = p.cluster.map_or(-1, |c| c as i64);
            writeln!(
                w,
                "{:e},{:e},{:e},{},{:e},{}",
                p.p0.x,
                p.p0.y,
                p.p0.z,
                vals.join(","),
                p.gap,
                id
            )?;
        }
        Ok(())
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Single-linkage clusters at threshold `tol` in the sup metric. Labels are ordered by
/// decreasing cluster size, ties by first member.
pub fn single_linkage(vectors: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let n = vectors.len();
    let mut uf = UnionFind((0..n).collect());
    if n == 0 {
        return Vec::new();
    }
    let dim = vectors[0].len();
    // cells of side tol: members of one cell are within tol of each other
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, v) in vectors.iter().enumerate() {
        let key: Vec<i64> = v.iter().map(|c| (c / tol).floor() as i64).collect();
        cells.entry(key).or_default().push(i);
    }
    let mut keys: Vec<&Vec<i64>> = cells.keys().collect();
    keys.sort();
    for members in cells.values() {
        for w in members.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
        .map(|mut code| {
            (0..dim)
                .map(|_| {
                    let d = (code % 3) as i64 - 1;
                    code /= 3;
                    d
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().find(|d| **d != 0).is_some_and(|d| *d > 0))
        .collect();
    for key in keys {
        let a = &cells[key];
        for off in &offsets {
            let nk: Vec<i64> = key.iter().zip(off).map(|(k, o)| k + o).collect();
            let Some(b) = cells.get(&nk) else { continue };
            if uf.find(a[0]) == uf.find(b[0]) {
                continue;
            }
            'outer: for &i in a {
                for &j in b {
                    if sup_dist(&vectors[i], &vectors[j]) <= tol {
                        uf.union(i, j);
                        break 'outer;
                    }
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for &r in &roots {
        *sizes.entry(r).or_default() += 1;
    }
    let mut order: Vec<(usize, usize)> = sizes.into_iter().collect();
    // roots are minimal members, so ties break by first member
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let label: HashMap<usize, usize> = order.iter().enumerate().map(|(l, (r, _))| (*r, l)).collect();
    roots.iter().map(|r| label[r]).collect()
}

pub fn survey_basins(
    grid: &GridSpec,
    dict: &ObservableDictionary,
    cfg: &BasinConfig,
    params: &MapParams,
) -> Result<BasinReport> {
    check_window(cfg.n_iters, cfg.burn_in)?;
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty grid".into()));
    }
    if !(cfg.cluster_tol > 0.0) {
        return Err(Error::InvalidParams("cluster_tol must be positive".into()));
    }
    let stepper = Stepper::new(params);
    let jitter = (cfg.jitter > 0.0).then_some(Jitter {
        seed: cfg.seed,
        amplitude: cfg.jitter,
    });
    // one perturbation stream per (x, y) column, so points on a common stable leaf
    // see the same perturbations
    let runs: Vec<(Point, BirkhoffAverages)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (p0, col) = grid.point(idx);
            let avg = averages_with(
                p0,
                dict,
                cfg.n_iters,
                cfg.burn_in,
                &stepper,
                jitter_rng(jitter, col as u64),
            );
            (p0, avg)
        })
        .collect();
    let resolved: Vec<usize> = (0..runs.len())
        .filter(|&i| runs[i].1.gap <= cfg.cluster_tol / 2.0)
        .collect();
    let vectors: Vec<Vec<f64>> = resolved.iter().map(|&i| runs[i].1.averages.clone()).collect();
    let labels = single_linkage(&vectors, cfg.cluster_tol);
    let k_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k_clusters];
    let mut centers = vec![vec![0.0; dict.len()]; k_clusters];
    for (v, &l) in vectors.iter().zip(&labels) {
        counts[l] += 1;
        for (c, x) in centers[l].iter_mut().zip(v) {
            *c += x;
        }
    }
    for (c, &n) in centers.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|x| *x /= n as f64);
    }
    let total = runs.len();
    let mut cluster_of = vec![None; total];
    for (&i, &l) in resolved.iter().zip(&labels) {
        cluster_of[i] = Some(l);
    }
    let points = runs
        .into_iter()
        .zip(cluster_of)
        .map(|((p0, a), cluster)| GridPointResult {
            p0,
            averages: a.averages,
            gap: a.gap,
            cluster,
        })
        .collect();
    Ok(BasinReport {
        schema: 1,
        params_echo: params.to_raw(),
        grid: *grid,
        config: *cfg,
        observables: dict.names.clone(),
        n_points: total,
        k_clusters,
        cluster_centers: centers,
        basin_fractions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        unresolved_fraction: (total - resolved.len()) as f64 / total as f64,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::validate_params;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn ex1() -> MapParams {
        validate_params(&RawParams::ex1()).unwrap()
    }

    #[test]
    fn constant_observable_is_exact() {
        let p = ex1();
        let dict = ObservableDictionary::new(vec![("c".into(), Box::new(|_| 0.375))]);
        let a = birkhoff_averages(Point::new(0.3, 0.1, 0.2), &dict, 1000, 10, &p, None).unwrap();
        assert_eq!(a.averages, vec![0.375]);
        assert_eq!(a.gap, 0.0);
    }

    #[test]
    fn z_average_in_range_and_window_checked() {
        let p = ex1();
        let dict = ObservableDictionary::standard(&p);
        let a = birkhoff_averages(Point::new(0.3, 0.1, 0.2), &dict, 5000, 100, &p, Some(Jitter::new(1)))
            .unwrap();
        assert!(a.averages.iter().all(|v| v.abs() <= 1.0));
        assert!(birkhoff_averages(Point::new(0.3, 0.1, 0.2), &dict, 999, 100, &p, None).is_err());
    }

    #[test]
    fn same_stable_leaf_synchronizes() {
        let p = ex1();
        let dict = ObservableDictionary::standard(&p);
        let j = Some(Jitter::new(4));
        let a = birkhoff_averages(Point::new(0.3, 0.1, -0.9), &dict, 2000, 60, &p, j).unwrap();
        let b = birkhoff_averages(Point::new(0.3, 0.1, 0.7), &dict, 2000, 60, &p, j).unwrap();
        let bound = 2.0 * p.lambda_ss.powi(60);
        for (x, y) in a.averages.iter().zip(&b.averages) {
            assert!((x - y).abs() <= bound, "{x} {y}");
        }
    }

    #[test]
    fn one_point_grid() {
        let p = ex1();
        let dict = ObservableDictionary::new(vec![("c".into(), Box::new(|_| 1.0))]);
        let cfg = BasinConfig {
            n_iters: 1000,
            burn_in: 10,
            ..Default::default()
        };
        let rep = survey_basins(&GridSpec::new(1, 1, 1, &p), &dict, &cfg, &p).unwrap();
        assert_eq!(rep.k_clusters, 1);
        assert_eq!(rep.basin_fractions, vec![1.0]);
        assert_eq!(rep.unresolved_fraction, 0.0);
    }

    #[test]
    fn linkage_chains_and_separates() {
        let v = vec![vec![0.0, 0.0], vec![0.009, 0.0], vec![0.018, 0.0], vec![0.5, 0.5]];
        assert_eq!(single_linkage(&v, 0.01), vec![0, 0, 0, 1]);
        assert_eq!(single_linkage(&v, 0.005), vec![0, 1, 2, 3]);
    }

    fn brute_linkage(v: &[Vec<f64>], tol: f64) -> Vec<Vec<usize>> {
        let n = v.len();
        let mut uf = UnionFind((0..n).collect());
        for i in 0..n {
            for j in i + 1..n {
                if sup_dist(&v[i], &v[j]) <= tol {
                    uf.union(i, j);
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            let r = uf.find(i);
            groups.entry(r).or_default().push(i);
        }
        let mut g: Vec<Vec<usize>> = groups.into_values().collect();
        g.sort();
        g
    }

    proptest! {
        #[test]
        fn linkage_matches_brute_force(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..0.2, 3), 1..60),
            tol in 0.005f64..0.05,
        ) {
            let labels = single_linkage(&pts, tol);
            let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
            for (i, l) in labels.iter().enumerate() {
                groups.entry(*l).or_default().push(i);
            }
            let mut g: Vec<Vec<usize>> = groups.into_values().collect();
            g.sort();
            prop_assert_eq!(g, brute_linkage(&pts, tol));
        }
    }

    #[test]
    fn fractions_partition_the_grid() {
        let p = ex1();
        let dict = ObservableDictionary::standard(&p);
        let cfg = BasinConfig {
            n_iters: 2000,
            burn_in: 50,
            cluster_tol: 0.05,
            ..Default::default()
        };
        let rep = survey_basins(&GridSpec::new(4, 4, 2, &p), &dict, &cfg, &p).unwrap();
        let total: f64 = rep.basin_fractions.iter().sum::<f64>() + rep.unresolved_fraction;
        assert!((total - 1.0).abs() < 1e-12);
        // columns sharing (x, y) agree
        for col in 0..16 {
            let (a, b) = (&rep.points[col], &rep.points[col + 16]);
            if a.cluster.is_some() && b.cluster.is_some() {
                assert_eq!(a.cluster, b.cluster);
            }
        }
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,y0,z0,avg_1,avg_2,avg_3,avg_4,avg_5,avg_6,conv_gap,cluster_id\n"));
        assert_eq!(text.lines().count(), 33);
    }
}
