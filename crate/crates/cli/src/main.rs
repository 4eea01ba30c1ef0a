//! `dynlab`: batch front end for the dynlab audits.
//!
//! Exit codes: 0 when every requested audit passes, 2 when an audit fails, 1 on a
//! configuration or IO error.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dynlab_core::dynamics::{fixed_point_q, Orientation};
use dynlab_core::measures::{
    abs_continuity_scan, birkhoff_measure, leaf_measure, lebesgue_on_curve, main_inequality_audit,
    project_measure, Chart, Domain, EmpiricalMeasure, FloorPolicy, InequalityConfig, ScanConfig,
};
use dynlab_core::orbit::{orbit, write_orbit_csv, Jitter};
use dynlab_core::physical::{survey_basins, BasinConfig, GridSpec, ObservableDictionary};
use dynlab_core::report::Envelope;
use dynlab_core::transversality::{audit_h1, required_depth, UnstableCurve};
use dynlab_core::unstable::{perturbation_audit, FieldConfig, SlopeField};
use dynlab_core::{validate_params, Example, Itinerary, MapParams, Point, RawParams};

#[derive(Parser, Debug)]
#[command(name = "dynlab", version, about = "Audits for skew-product partially hyperbolic attractors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// key=value parameter file; flags override it
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[arg(long, global = true)]
    example: Option<Example>,
    #[arg(long, global = true)]
    l: Option<u32>,
    #[arg(long, global = true)]
    lambda_ss: Option<f64>,
    #[arg(long, global = true)]
    lambda_c: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Ex1 z-levels, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    d: Option<Vec<f64>>,
    #[arg(long, global = true)]
    lambda_c_plus: Option<f64>,
    #[arg(long, global = true)]
    delta_bump: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    n_power: Option<u32>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; results do not depend on it
    #[arg(long, global = true, env = "DYNLAB_THREADS")]
    #[serde(skip)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an orbit as CSV
    Simulate(SimulateArgs),
    /// Unstable slopes over all cylinders of a given depth
    UnstableField(FieldArgs),
    /// Sampled (H1) audit of stable-projection slope gaps
    Transversality(TransversalityArgs),
    /// Birkhoff u-Gibbs proxy built from a piece of unstable leaf
    Ugibbs(UgibbsArgs),
    /// Scale scan of the projected u-Gibbs proxy
    NormScan(NormScanArgs),
    /// Decay rate of the family norm under push-forward
    Inequality(InequalityArgs),
    /// Cluster Birkhoff averages over a grid of initial conditions
    Basins(BasinArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, value_parser = parse_point, default_value = "0.3,0,0", allow_hyphen_values = true)]
    start: [f64; 3],
    /// Per-step perturbation of x; 0 disables it
    #[arg(long, default_value_t = Jitter::DEFAULT_AMPLITUDE)]
    jitter: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FieldArgs {
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Base point for the Ex2 series
    #[arg(long, default_value_t = 0.25)]
    x: f64,
    /// Samples for the deformed-family comparison (used when mu > 0 or n_power > 1)
    #[arg(long, default_value_t = 4000)]
    samples: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TransversalityArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02")]
    epsilon: Vec<f64>,
    #[arg(long, default_value_t = 20_000)]
    pairs: usize,
    /// Backward word length; defaults to the smallest depth that resolves every epsilon
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct UgibbsArgs {
    /// Atoms seeded on the leaf of the fixed point
    #[arg(long, default_value_t = 100)]
    atoms: usize,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct NormScanArgs {
    #[arg(long, default_value_t = 100)]
    atoms: usize,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.03,0.02,0.01,0.007,0.005")]
    r: Vec<f64>,
    /// Scan the seed curve measure instead of the Birkhoff measure
    #[arg(long)]
    single_curve: bool,
    #[arg(long, default_value_t = 2.0)]
    bounded_ratio: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct InequalityArgs {
    /// Range `a:b` or list `1,2,3`
    #[arg(long, value_parser = parse_n_list, default_value = "1:6")]
    n: NList,
    #[arg(long, default_value_t = 1e-5)]
    r: f64,
    /// c_n = cn * lambda_c^-n
    #[arg(long, default_value_t = 10.0)]
    cn: f64,
    #[arg(long, default_value_t = 1_000_000)]
    atoms: usize,
    /// Skip the u-Gibbs floor term
    #[arg(long)]
    no_floor: bool,
}

#[derive(Debug, Clone, Serialize)]
struct NList(Vec<u32>);

#[derive(Args, Debug, Clone, Serialize)]
struct BasinArgs {
    #[arg(long, value_parser = parse_grid, default_value = "32x32x8")]
    grid: [usize; 3],
    #[arg(long, default_value_t = 100_000)]
    iters: usize,
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// Pass threshold on the resolved (clustered) share of the grid
    #[arg(long, default_value_t = 0.99)]
    min_fraction: f64,
    /// Also require exactly this many clusters
    #[arg(long)]
    expect_k: Option<usize>,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected x,y,z, got {s:?}"))
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split('x')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let g: [usize; 3] = v.try_into().map_err(|_| format!("expected NXxNYxNZ, got {s:?}"))?;
    if g.contains(&0) {
        return Err("grid sizes must be positive".into());
    }
    Ok(g)
}

fn parse_n_list(s: &str) -> Result<NList, String> {
    let bad = |e: std::num::ParseIntError| e.to_string();
    if let Some((a, b)) = s.split_once(':') {
        let (a, b): (u32, u32) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if b < a {
            return Err(format!("empty range {s:?}"));
        }
        return Ok(NList((a..=b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(bad))
        .collect::<Result<_, _>>()
        .map(NList)
}

/// Failure modes with their exit codes.
enum Failure {
    Config(String),
    Audit,
}

impl From<dynlab_core::Error> for Failure {
    fn from(e: dynlab_core::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn resolve_params(c: &Common) -> Result<(RawParams, MapParams), Failure> {
    let file = match &c.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RawParams::parse(&text)?
        }
        None => RawParams::default(),
    };
    let flags = RawParams {
        example: c.example,
        l: c.l,
        lambda_ss: c.lambda_ss,
        lambda_c: c.lambda_c,
        alpha: c.alpha,
        d: c.d.clone(),
        lambda_c_plus: c.lambda_c_plus,
        delta_bump: c.delta_bump,
        mu: c.mu,
        n_power: c.n_power,
    };
    let raw = file.overlay(&flags);
    let params = validate_params(&raw)?;
    Ok((raw.resolve(), params))
}

struct Ctx {
    common: Common,
    raw: RawParams,
    params: MapParams,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.common.out_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.path(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
    }

    /// Writes the JSON envelope and turns `pass` into the outcome.
    fn finish<A: Serialize, R: Serialize>(
        &self,
        kind: &str,
        args: &A,
        report: &R,
        pass: Option<bool>,
    ) -> Outcome {
        #[derive(Serialize)]
        struct Config<'a, A> {
            seed: u64,
            params_file: Option<&'a Path>,
            #[serde(flatten)]
            args: &'a A,
        }
        let config = Config {
            seed: self.common.seed,
            params_file: self.common.params.as_deref(),
            args,
        };
        let mut env = Envelope::new(kind, &self.raw, &config, report);
        if let Some(p) = pass {
            env = env.with_pass(p);
        }
        env.write(self.create(&format!("{kind}.json"))?)?;
        match pass {
            Some(false) => Err(Failure::Audit),
            _ => Ok(()),
        }
    }
}

fn q_leaf(params: &MapParams) -> Result<UnstableCurve, Failure> {
    let (_, sym) = fixed_point_q(params);
    let word = Itinerary::constant(sym, 60, Orientation::Backward);
    Ok(UnstableCurve::from_word(0.0, &word, params, 1.0, 2048)?)
}

fn ugibbs_proxy(ctx: &Ctx, atoms: usize, iters: usize) -> Result<(EmpiricalMeasure, EmpiricalMeasure), Failure> {
    if atoms < 2 || iters == 0 {
        return Err(Failure::Config("need at least 2 atoms and 1 iterate".into()));
    }
    let start = lebesgue_on_curve(&q_leaf(&ctx.params)?, atoms);
    let mu = birkhoff_measure(&start, iters, &ctx.params, Some(Jitter::new(ctx.common.seed)));
    Ok((start, mu))
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Outcome {
    let jitter = (a.jitter > 0.0).then_some(Jitter {
        seed: ctx.common.seed,
        amplitude: a.jitter,
    });
    let pts = orbit(Point::new(a.start[0], a.start[1], a.start[2]), &ctx.params, a.iters, jitter);
    write_orbit_csv(ctx.create("orbit.csv")?, &pts)?;
    #[derive(Serialize)]
    struct Summary {
        rows: usize,
        deformed: bool,
        last: Point,
    }
    let summary = Summary {
        rows: pts.len(),
        deformed: ctx.params.mu != 0.0 || ctx.params.n_power != 1,
        last: pts.last().copied().unwrap_or(Point::new(a.start[0], a.start[1], a.start[2])),
    };
    ctx.finish("simulate", a, &summary, None)
}

fn unstable_field(ctx: &Ctx, a: &FieldArgs) -> Outcome {
    let field = SlopeField::cylinders(&ctx.params, a.depth, a.x)?;
    field.write_csv(ctx.create("slope_field.csv")?)?;
    let tail = field.tail(&ctx.params);
    let worst = field.residuals.iter().cloned().fold(0.0, f64::max);
    let perturbation = if ctx.params.mu != 0.0 || ctx.params.n_power != 1 {
        let cfg = FieldConfig {
            n_samples: a.samples,
            seed: ctx.common.seed,
            ..FieldConfig::default()
        };
        Some(perturbation_audit(&ctx.params, &cfg)?)
    } else {
        None
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        depth: usize,
        cylinders: usize,
        sup_bound: f64,
        tail: f64,
        max_residual: f64,
        perturbation: Option<&'a dynlab_core::unstable::PerturbationReport>,
    }
    let pass = worst <= tail + 1e-12 && perturbation.as_ref().is_none_or(|p| p.holds);
    let summary = Summary {
        depth: field.depth,
        cylinders: field.values.len(),
        sup_bound: field.sup_bound,
        tail,
        max_residual: worst,
        perturbation: perturbation.as_ref(),
    };
    ctx.finish("unstable_field", a, &summary, Some(pass))
}

fn transversality(ctx: &Ctx, a: &TransversalityArgs) -> Outcome {
    let depth = a.depth.unwrap_or_else(|| required_depth(&ctx.params, &a.epsilon));
    let rep = audit_h1(&ctx.params, &a.epsilon, a.pairs, depth, ctx.common.seed)?;
    rep.write_worst_csv(ctx.create("worst_pairs.csv")?)?;
    ctx.finish("transversality", a, &rep, Some(rep.pass()))
}

fn ugibbs(ctx: &Ctx, a: &UgibbsArgs) -> Outcome {
    let (_, mu) = ugibbs_proxy(ctx, a.atoms, a.iters)?;
    mu.write_csv(ctx.create("ugibbs.csv")?)?;
    #[derive(Serialize)]
    struct Summary {
        n_atoms: usize,
        total_mass: f64,
        mean: [f64; 3],
    }
    let mean = [
        mu.integrate(|p| p.x),
        mu.integrate(|p| p.y),
        mu.integrate(|p| p.z),
    ];
    let summary = Summary {
        n_atoms: mu.len(),
        total_mass: mu.total_mass,
        mean,
    };
    ctx.finish("ugibbs", a, &summary, None)
}

fn norm_scan(ctx: &Ctx, a: &NormScanArgs) -> Outcome {
    let (start, mu) = ugibbs_proxy(ctx, a.atoms, a.iters)?;
    let target = if a.single_curve { &start } else { &mu };
    let y = ctx.params.trapping_region().0;
    let cfg = ScanConfig {
        bounded_ratio: a.bounded_ratio,
        ..ScanConfig::default()
    };
    let rep = abs_continuity_scan(
        &project_measure(target, Chart::plane(0.0)),
        &a.r,
        &Domain::strip(-y, y),
        &cfg,
    )?;
    ctx.finish("norm_scan", a, &rep, Some(rep.bounded))
}

fn inequality(ctx: &Ctx, a: &InequalityArgs) -> Outcome {
    let mu = leaf_measure(&ctx.params, a.atoms, ctx.common.seed)?;
    let mut cfg = InequalityConfig {
        r: a.r,
        cn_constant: a.cn,
        ..InequalityConfig::default()
    };
    if a.no_floor {
        cfg.floor = FloorPolicy::Zero;
    } else if let FloorPolicy::Proxy { seed, .. } = &mut cfg.floor {
        *seed = ctx.common.seed;
    }
    let rep = main_inequality_audit(&mu, &ctx.params, &a.n.0, &cfg)?;
    ctx.finish("inequality", a, &rep, Some(rep.pass))
}

fn basins(ctx: &Ctx, a: &BasinArgs) -> Outcome {
    let grid = GridSpec::new(a.grid[0], a.grid[1], a.grid[2], &ctx.params);
    let dict = ObservableDictionary::standard(&ctx.params);
    let cfg = BasinConfig {
        n_iters: a.iters,
        burn_in: a.burn_in,
        cluster_tol: a.tol,
        seed: ctx.common.seed,
        ..BasinConfig::default()
    };
    let rep = survey_basins(&grid, &dict, &cfg, &ctx.params)?;
    rep.write_csv(ctx.create("basins.csv")?)?;
    let resolved: f64 = rep.basin_fractions.iter().sum();
    let pass = resolved >= a.min_fraction && a.expect_k.is_none_or(|k| k == rep.k_clusters);
    ctx.finish("basins", a, &rep, Some(pass))
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let (raw, params) = resolve_params(&cli.common)?;
    fs::create_dir_all(&cli.common.out_dir)?;
    let ctx = Ctx {
        common: cli.common,
        raw,
        params,
    };
    match &cli.cmd {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::UnstableField(a) => unstable_field(&ctx, a),
        Command::Transversality(a) => transversality(&ctx, a),
        Command::Ugibbs(a) => ugibbs(&ctx, a),
        Command::NormScan(a) => norm_scan(&ctx, a),
        Command::Inequality(a) => inequality(&ctx, a),
        Command::Basins(a) => basins(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Audit) => {
            eprintln!("audit failed; see the report in the output directory");
            ExitCode::from(2)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
