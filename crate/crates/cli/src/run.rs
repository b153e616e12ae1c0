//! Experiment drivers and report assembly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use schauder_core::field::ConstSource;
use schauder_core::iterate::{
    aligned_grid, gradient_bounds_from_duality, meyers_scan, run_iteration, IterationOptions,
    IterationTrace, Rescaled, Variant,
};
use schauder_core::norms::{duality_gap, HardyOptions};
use schauder_core::solver::{solve_sources, BoundaryCondition, SolveReport};
use schauder_core::sparse::{sparse_bound, ProfileBump, SparseOptions};
use schauder_core::{Cube, Field, FieldKind, GridSpec};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::instance::{generate_instance, Instance};

/// A named number and the operations that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub provenance: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub instance: usize,
    pub seed: u64,
    /// The experiment's headline number; `None` when the instance failed.
    pub headline: Option<f64>,
    pub metrics: Vec<Metric>,
    /// Acceptance threshold this instance misses, if any.
    pub breach: Option<String>,
    pub error: Option<String>,
}

/// Two-column plot data.
#[derive(Clone, Debug)]
pub struct Curve {
    pub file: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Aggregate {
    pub headline: &'static str,
    pub count: usize,
    pub failures: usize,
    pub breaches: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Environment {
    pub program: String,
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub elapsed_seconds: f64,
}

impl Environment {
    fn capture(elapsed: f64) -> Self {
        Environment {
            program: format!("schauder {}", env!("CARGO_PKG_VERSION")),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
            elapsed_seconds: elapsed,
        }
    }

    fn stamp(&self) -> String {
        format!("# {} {}/{} threads={}", self.program, self.os, self.arch, self.threads)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub aggregate: Aggregate,
    pub environment: Environment,
    #[serde(skip)]
    pub curves: Vec<Curve>,
    /// Extra files (name, contents), e.g. iteration traces.
    #[serde(skip)]
    pub artifacts: Vec<(String, String)>,
}

impl Report {
    pub fn breached(&self) -> bool {
        self.rows.iter().any(|r| r.breach.is_some() || r.error.is_some())
    }

    /// `rows.csv` contents: an environment stamp line, a header and one
    /// line per instance. Only the stamp depends on the machine.
    pub fn csv(&self) -> String {
        let names: Vec<&str> = self
            .rows
            .iter()
            .find(|r| r.error.is_none())
            .map(|r| r.metrics.iter().map(|m| m.name.as_str()).collect())
            .unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["instance", "seed", "headline"];
        header.extend(&names);
        header.extend(["breach", "error"]);
        w.write_record(&header).expect("in-memory write");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![r.instance.to_string(), r.seed.to_string(), fmt(r.headline)];
            for name in &names {
                rec.push(fmt(r.metrics.iter().find(|m| m.name == *name).map(|m| m.value)));
            }
            rec.push(r.breach.clone().unwrap_or_default());
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
        format!("{}\n{body}", self.environment.stamp())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join("report.json"), json + "\n")?;
        fs::write(dir.join("rows.csv"), self.csv())?;
        for c in &self.curves {
            let mut s = String::new();
            for (x, y) in &c.points {
                let _ = writeln!(s, "{x:e} {y:e}");
            }
            fs::write(dir.join(&c.file), s)?;
        }
        for (name, text) in &self.artifacts {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

/// Name of the headline number of each experiment.
pub fn headline_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Solve => "residual",
        Experiment::Rhi => "rhi_ratio",
        Experiment::Schauder => "holder_quotient",
        Experiment::SparseBound => "c_emp",
        Experiment::Iterate => "decay_ratio",
        Experiment::Norms => "duality_ratio",
    }
}

/// Decay ratio the iterate experiment must stay below.
pub const DECAY_TARGET: f64 = 0.5;

struct Outcome {
    headline: f64,
    metrics: Vec<Metric>,
    breach: Option<String>,
    curves: Vec<Curve>,
    artifacts: Vec<(String, String)>,
}

fn metric(name: impl Into<String>, value: f64, provenance: &'static str) -> Metric {
    Metric {
        name: name.into(),
        value,
        provenance,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn unit_grid(cfg: &ExperimentConfig) -> schauder_core::Result<GridSpec> {
    GridSpec::new(Cube::unit(cfg.n)?, cfg.m)
}

/// `−div A∇u = 0` with the instance boundary data on `spec`.
fn harmonic(inst: &Instance, spec: &GridSpec, tol: f64) -> schauder_core::Result<SolveReport> {
    let n = spec.n();
    let bc = BoundaryCondition::Inherited(Field::sample(spec.clone(), FieldKind::Scalar, &inst.boundary)?);
    solve_sources(spec, &inst.a, &ConstSource::new(n, vec![0.0; n]), &bc, tol)
}

fn centered(cfg: &ExperimentConfig, half: f64) -> schauder_core::Result<Cube> {
    Cube::new(vec![0.5; cfg.n], half)
}

fn run_solve(cfg: &ExperimentConfig, inst: &Instance) -> schauder_core::Result<Outcome> {
    let spec = unit_grid(cfg)?;
    let rep = solve_sources(&spec, &inst.a, &inst.f, &BoundaryCondition::Zero, cfg.tol)?;
    let breach = (rep.residual > cfg.tol).then(|| format!("residual {} above tol {}", rep.residual, cfg.tol));
    Ok(Outcome {
        headline: rep.residual,
        metrics: vec![
            metric("residual", rep.residual, "solve_sources: relative algebraic residual"),
            metric("iterations", rep.iterations as f64, "solve_sources: Krylov iterations"),
            metric(
                "u_max",
                rep.u.values().iter().fold(0.0f64, |a, v| a.max(v.abs())),
                "solve_sources: max |u| over nodes",
            ),
        ],
        breach,
        curves: Vec::new(),
        artifacts: Vec::new(),
    })
}

fn run_rhi(cfg: &ExperimentConfig, inst: &Instance) -> schauder_core::Result<Outcome> {
    let spec = unit_grid(cfg)?;
    let rep = harmonic(inst, &spec, cfg.tol)?;
    // 2Q is the whole domain.
    let q = centered(cfg, 0.25)?;
    let mut grid = cfg.q_grid.clone();
    if !grid.iter().any(|x| (x - cfg.q).abs() < 1e-12) {
        grid.push(cfg.q);
        grid.sort_by(f64::total_cmp);
    }
    let rows = meyers_scan(&rep.grad_u, &q, 2.0, &grid)?;
    let mut metrics = Vec::new();
    let mut headline = f64::NAN;
    for r in &rows {
        metrics.push(metric(
            format!("ratio_q{:.2}", r.q),
            r.ratio,
            "solve_sources(F = 0, band-limited boundary) -> meyers_scan(Q, 2Q)",
        ));
        if (r.q - cfg.q).abs() < 1e-12 {
            headline = r.ratio;
        }
    }
    let mut breach = None;
    if rows.iter().any(|r| !r.ratio.is_finite()) {
        breach = Some("non-finite reverse Hölder ratio".into());
    } else if rows.windows(2).any(|w| w[1].ratio < w[0].ratio * (1.0 - 1e-12)) {
        breach = Some("ratio decreases in q".into());
    }
    Ok(Outcome {
        headline,
        metrics,
        breach,
        curves: vec![Curve {
            file: format!("rhi_ratio_vs_q_{:03}.dat", inst.index),
            points: rows.iter().map(|r| (r.q, r.ratio)).collect(),
        }],
        artifacts: Vec::new(),
    })
}

fn run_schauder(cfg: &ExperimentConfig, inst: &Instance) -> schauder_core::Result<Outcome> {
    let spec = unit_grid(cfg)?;
    let rep = harmonic(inst, &spec, cfg.tol)?;
    // 4Q_0 is the whole domain.
    let q0 = centered(cfg, 0.125)?;
    let b = gradient_bounds_from_duality(&inst.a, &rep.u, &q0, cfg.alpha)?;
    const SRC: &str = "solve_sources(F = 0, band-limited boundary) -> gradient_bounds_from_duality(Q0, 2Q0, 4Q0)";
    let breach = if b.inconsistent {
        Some("gradient bounds inconsistent".into())
    } else if !b.holder_quotient.is_finite() {
        Some("non-finite Hölder quotient".into())
    } else {
        None
    };
    Ok(Outcome {
        headline: b.holder_quotient,
        metrics: vec![
            metric("holder_quotient", b.holder_quotient, SRC),
            metric("sup_norm", b.sup_norm, SRC),
            metric("l2_avg", b.l2_avg, SRC),
            metric("residual", b.residual, SRC),
        ],
        breach,
        curves: Vec::new(),
        artifacts: Vec::new(),
    })
}

fn run_sparse(cfg: &ExperimentConfig, inst: &Instance) -> schauder_core::Result<Outcome> {
    // Data live on 6Q = [-1, 1]^n.
    let q = Cube::new(vec![0.0; cfg.n], 1.0 / 6.0)?;
    let spec = GridSpec::new(q.dilate(6.0)?, cfg.m)?;
    let rep = solve_sources(&spec, &inst.a, &inst.f, &BoundaryCondition::Zero, cfg.tol)?;
    let f = Field::sample(spec.clone(), FieldKind::Vector, &inst.f)?;
    let g = Field::sample(spec.clone(), FieldKind::Vector, &inst.g)?;
    let phi = ProfileBump::new(q.dilate(2.0)?, 1.0, schauder_core::maximal::DEFAULT_N0)?.field(spec)?;
    let b = sparse_bound(&rep.grad_u, &f, &g, &phi, &q, cfg.eps, cfg.p, &SparseOptions::default())?;
    const SRC: &str = "solve_sources(6Q) -> stopping_cubes -> sparse_bound";
    let breach = if !b.report.valid {
        Some("verify_sparse failed".into())
    } else if !b.c_emp.is_finite() {
        Some("non-finite C_emp".into())
    } else {
        None
    };
    Ok(Outcome {
        headline: b.c_emp,
        metrics: vec![
            metric("c_emp", b.c_emp, SRC),
            metric("lhs", b.lhs, "solve_sources(6Q) -> pairing_lhs"),
            metric("rhs", b.rhs, "stopping_cubes -> sparse_rhs"),
            metric("family_size", b.family_size as f64, SRC),
            metric("levels", b.levels as f64, SRC),
            metric("valid", flag(b.report.valid), "verify_sparse (Σ1_E ≤ 1 reading)"),
            metric("strict_valid", flag(b.report.strict_valid), "verify_sparse (Σ1_P ≤ 1 reading)"),
            metric("min_fraction", b.report.min_fraction, "verify_sparse"),
        ],
        breach,
        curves: Vec::new(),
        artifacts: Vec::new(),
    })
}

pub fn iteration_options(cfg: &ExperimentConfig) -> IterationOptions {
    IterationOptions {
        depth: cfg.depth,
        local_m: cfg.local_m,
        tol: cfg.tol,
        ..IterationOptions::default()
    }
}

/// `(level, term_sum, remainder)` lines of a trace.
pub fn trace_csv(t: &IterationTrace) -> String {
    let mut s = String::from("level,term_sum,remainder\n");
    for l in &t.levels {
        let _ = writeln!(s, "{},{:e},{:e}", l.k, l.term_sum, l.remainder);
    }
    s
}

fn run_iterate(cfg: &ExperimentConfig, inst: &Instance) -> schauder_core::Result<Outcome> {
    let q0 = centered(cfg, 0.5 * cfg.side)?;
    let spec = aligned_grid(&q0, cfg.variant, cfg.m)?;
    let center = vec![0.5; cfg.n];
    let unit = |s| Rescaled {
        inner: s,
        center: center.clone(),
        scale: cfg.side,
    };
    let bc = BoundaryCondition::Inherited(Field::sample(spec.clone(), FieldKind::Scalar, &unit(&inst.boundary))?);
    let zero = ConstSource::new(cfg.n, vec![0.0; cfg.n]);
    let sol = solve_sources(&spec, &inst.a, &zero, &bc, cfg.tol)?;
    let exponent = match cfg.variant {
        Variant::Lq => cfg.q,
        Variant::Holder => cfg.p,
    };
    let t = run_iteration(&inst.a, &sol.u, &unit(&inst.g), &q0, cfg.variant, exponent, &iteration_options(cfg))?;
    const SRC: &str = "solve_sources(enclosing cube) -> run_iteration";
    let mut metrics = vec![metric("decay_ratio", t.decay_ratio, SRC)];
    for l in &t.levels {
        metrics.push(metric(format!("term_{}", l.k), l.term_sum, SRC));
        metrics.push(metric(format!("remainder_{}", l.k), l.remainder, SRC));
    }
    metrics.push(metric("truncated", flag(t.truncated.is_some()), SRC));
    let breach = (!(t.decay_ratio < DECAY_TARGET))
        .then(|| format!("decay ratio {} not below {DECAY_TARGET}", t.decay_ratio));
    let json = serde_json::to_string_pretty(&t).map_err(schauder_core::Error::from)?;
    Ok(Outcome {
        headline: t.decay_ratio,
        metrics,
        breach,
        curves: vec![Curve {
            file: format!("iterate_term_vs_level_{:03}.dat", inst.index),
            points: t.levels.iter().map(|l| (l.k as f64, l.term_sum)).collect(),
        }],
        artifacts: vec![
            (format!("iterate_trace_{:03}.json", inst.index), json + "\n"),
            (format!("iterate_trace_{:03}.csv", inst.index), trace_csv(&t)),
        ],
    })
}

fn run_norms(cfg: &ExperimentConfig, inst: &Instance) -> schauder_core::Result<Outcome> {
    let spec = unit_grid(cfg)?;
    let q = Cube::unit(cfg.n)?;
    let f = Field::sample(spec.clone(), FieldKind::Vector, &inst.f)?;
    let g = Field::sample(spec, FieldKind::Vector, &inst.g)?;
    let d = duality_gap(&g, &f, &q, cfg.p, cfg.duality_kind, &HardyOptions::default())?;
    const SRC: &str = "duality_gap: |⨍gf| / (ℓ^α Λ(g) h^p(f))";
    let breach = if d.violation {
        Some("duality violation flag".into())
    } else if !d.ratio.is_finite() {
        Some("non-finite duality ratio".into())
    } else {
        None
    };
    Ok(Outcome {
        headline: d.ratio,
        metrics: vec![
            metric("duality_ratio", d.ratio, SRC),
            metric("lhs", d.lhs, "mean_over(g·f)"),
            metric("campanato", d.campanato, "campanato"),
            metric("hardy", d.hardy, "hardy_norm"),
            metric("violation", flag(d.violation), SRC),
        ],
        breach,
        curves: Vec::new(),
        artifacts: Vec::new(),
    })
}

fn run_instance(cfg: &ExperimentConfig, index: usize) -> (Row, Vec<Curve>, Vec<(String, String)>) {
    let inst = match generate_instance(cfg, index) {
        Ok(i) => i,
        Err(e) => {
            let row = Row {
                instance: index,
                seed: crate::instance::instance_seed(cfg.seed, index),
                headline: None,
                metrics: Vec::new(),
                breach: None,
                error: Some(e.to_string()),
            };
            return (row, Vec::new(), Vec::new());
        }
    };
    let out = match cfg.experiment {
        Experiment::Solve => run_solve(cfg, &inst),
        Experiment::Rhi => run_rhi(cfg, &inst),
        Experiment::Schauder => run_schauder(cfg, &inst),
        Experiment::SparseBound => run_sparse(cfg, &inst),
        Experiment::Iterate => run_iterate(cfg, &inst),
        Experiment::Norms => run_norms(cfg, &inst),
    };
    match out {
        Ok(o) => (
            Row {
                instance: index,
                seed: inst.seed,
                headline: Some(o.headline),
                metrics: o.metrics,
                breach: o.breach,
                error: None,
            },
            o.curves,
            o.artifacts,
        ),
        Err(e) => (
            Row {
                instance: index,
                seed: inst.seed,
                headline: None,
                metrics: Vec::new(),
                breach: None,
                error: Some(e.to_string()),
            },
            Vec::new(),
            Vec::new(),
        ),
    }
}

fn aggregate(e: Experiment, rows: &[Row]) -> Aggregate {
    let mut v: Vec<f64> = rows.iter().filter_map(|r| r.headline).filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let median = match v.len() {
        0 => None,
        k if k % 2 == 1 => Some(v[k / 2]),
        k => Some(0.5 * (v[k / 2 - 1] + v[k / 2])),
    };
    Aggregate {
        headline: headline_name(e),
        count: rows.len(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        breaches: rows.iter().filter(|r| r.breach.is_some()).count(),
        min: v.first().copied(),
        max: v.last().copied(),
        median,
    }
}

/// Runs every instance (in parallel) and assembles the report in instance
/// order. Writes nothing.
pub fn execute(cfg: &ExperimentConfig) -> Report {
    let t0 = Instant::now();
    let results: Vec<_> = (0..cfg.instances).into_par_iter().map(|i| run_instance(cfg, i)).collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut curves = Vec::new();
    let mut artifacts = Vec::new();
    for (r, c, a) in results {
        rows.push(r);
        curves.extend(c);
        artifacts.extend(a);
    }
    let agg = aggregate(cfg.experiment, &rows);
    curves.push(Curve {
        file: format!("{}_headline.dat", cfg.experiment.name().replace('-', "_")),
        points: rows
            .iter()
            .filter_map(|r| r.headline.map(|h| (r.instance as f64, h)))
            .collect(),
    });
    Report {
        config: cfg.clone(),
        rows,
        aggregate: agg,
        environment: Environment::capture(t0.elapsed().as_secs_f64()),
        curves,
        artifacts,
    }
}

/// Runs the experiment and writes `report.json`, `rows.csv` and the `.dat`
/// plot files into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::io::Result<Report> {
    fs::create_dir_all(&cfg.output_dir)?;
    let report = execute(cfg);
    report.write(&cfg.output_dir)?;
    Ok(report)
}
