//! Experiment configuration: a flat TOML key/value file, overridable from
//! the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use schauder_core::field::generators::CoefficientClass;
use schauder_core::iterate::{aligned_grid, Variant};
use schauder_core::norms::{alpha_for, HardyKind};
use schauder_core::Cube;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    Rhi,
    Schauder,
    SparseBound,
    Iterate,
    Norms,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Solve,
        Experiment::Rhi,
        Experiment::Schauder,
        Experiment::SparseBound,
        Experiment::Iterate,
        Experiment::Norms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Rhi => "rhi",
            Experiment::Schauder => "schauder",
            Experiment::SparseBound => "sparse-bound",
            Experiment::Iterate => "iterate",
            Experiment::Norms => "norms",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

/// Raw file contents. Every key is optional; absent keys take the defaults
/// of [`ExperimentConfig::default`].
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub lambda: Option<f64>,
    #[serde(rename = "Lambda")]
    pub big_lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub eps: Option<f64>,
    pub coefficient_class: Option<CoefficientClass>,
    pub experiment: Option<Experiment>,
    pub output_dir: Option<PathBuf>,
    pub instances: Option<usize>,
    pub q_grid: Option<Vec<f64>>,
    pub depth: Option<usize>,
    pub local_m: Option<usize>,
    pub variant: Option<Variant>,
    pub side: Option<f64>,
    pub duality_kind: Option<HardyKind>,
    pub tol: Option<f64>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        toml::from_str(&text).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))
    }

    /// `other` wins wherever it sets a key.
    pub fn overlay(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            seed, n, m, lambda, big_lambda, alpha, p, q, eps, coefficient_class, experiment,
            output_dir, instances, q_grid, depth, local_m, variant, side, duality_kind, tol
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub eps: f64,
    pub coefficient_class: CoefficientClass,
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub instances: usize,
    /// Exponents of the reverse Hölder scan.
    pub q_grid: Vec<f64>,
    /// Recursion depth `K` of the iterate experiment.
    pub depth: usize,
    /// Nodes per side of each re-gridded `3P` in the recursion.
    pub local_m: usize,
    pub variant: Variant,
    /// Side of `Q_0` in the iterate experiment.
    pub side: f64,
    /// Hardy kind carried by `f` in the norms pairing.
    pub duality_kind: HardyKind,
    pub tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n: 2,
            m: 65,
            lambda: 1.0,
            big_lambda: 4.0,
            alpha: 0.5,
            p: 0.8,
            q: 2.25,
            eps: 0.5,
            coefficient_class: CoefficientClass::Holder,
            experiment: Experiment::Solve,
            output_dir: PathBuf::from("out"),
            instances: 20,
            q_grid: (0..10).map(|i| 2.1 + 0.1 * i as f64).collect(),
            depth: 3,
            local_m: 13,
            variant: Variant::Lq,
            side: 0.5,
            duality_kind: HardyKind::R,
            tol: schauder_core::solver::DEFAULT_TOL,
        }
    }
}

/// Every problem found in a configuration, in key order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "config error: {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ExperimentConfig {
    /// Resolves defaults and validates, collecting every error before
    /// returning.
    pub fn resolve(file: ConfigFile) -> Result<Self, ConfigErrors> {
        let d = ExperimentConfig::default();
        let mut errs = Vec::new();
        let n = file.n.unwrap_or(d.n);
        if !(2..=3).contains(&n) {
            errs.push(format!("n = {n}: only n = 2 and n = 3 are supported"));
        }
        let nf = n as f64;
        // α and p live on the line p = n/(n + α); either determines the other.
        let (alpha, p) = match (file.alpha, file.p) {
            (Some(a), Some(p)) => {
                let want = nf / (nf + a);
                if (p - want).abs() > 1e-9 {
                    errs.push(format!("p = {p} and alpha = {a} violate p = n/(n + alpha) = {want}"));
                }
                (a, p)
            }
            (Some(a), None) => (a, nf / (nf + a)),
            (None, Some(p)) => (nf * (1.0 / p - 1.0), p),
            (None, None) => (d.alpha, nf / (nf + d.alpha)),
        };
        if !(alpha > 0.0 && alpha < 1.0) {
            errs.push(format!("alpha = {alpha} must lie in (0, 1)"));
        } else if (2..=3).contains(&n) {
            if let Err(e) = alpha_for(n, p) {
                errs.push(format!("p = {p}: {e}"));
            }
        }
        let cfg = ExperimentConfig {
            seed: file.seed.unwrap_or(d.seed),
            n,
            m: file.m.unwrap_or(d.m),
            lambda: file.lambda.unwrap_or(d.lambda),
            big_lambda: file.big_lambda.unwrap_or(d.big_lambda),
            alpha,
            p,
            q: file.q.unwrap_or(d.q),
            eps: file.eps.unwrap_or(d.eps),
            coefficient_class: file.coefficient_class.unwrap_or(d.coefficient_class),
            experiment: file.experiment.unwrap_or(d.experiment),
            output_dir: file.output_dir.unwrap_or(d.output_dir),
            instances: file.instances.unwrap_or(d.instances),
            q_grid: file.q_grid.unwrap_or(d.q_grid),
            depth: file.depth.unwrap_or(d.depth),
            local_m: file.local_m.unwrap_or(d.local_m),
            variant: file.variant.unwrap_or(d.variant),
            side: file.side.unwrap_or(d.side),
            duality_kind: file.duality_kind.unwrap_or(d.duality_kind),
            tol: file.tol.unwrap_or(d.tol),
        };
        cfg.check(&mut errs);
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errs))
        }
    }

    fn check(&self, errs: &mut Vec<String>) {
        if self.m < 5 || self.m % 2 == 0 {
            errs.push(format!("m = {}: need an odd node count of at least 5", self.m));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda) {
            errs.push(format!(
                "lambda = {}, Lambda = {}: need 0 < lambda <= Lambda",
                self.lambda, self.big_lambda
            ));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            errs.push(format!("eps = {} must lie in (0, 1)", self.eps));
        }
        if !(self.q > 2.0 && self.q.is_finite()) {
            errs.push(format!("q = {} must be a finite exponent above 2", self.q));
        }
        if self.instances == 0 {
            errs.push("instances must be at least 1".into());
        }
        if self.q_grid.is_empty() || self.q_grid.iter().any(|q| !(*q >= 1.0 && q.is_finite())) {
            errs.push("q_grid needs at least one finite exponent >= 1".into());
        }
        if self.q_grid.windows(2).any(|w| w[0] >= w[1]) {
            errs.push("q_grid must be strictly increasing".into());
        }
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            errs.push(format!("tol = {} must lie in (0, 1e-4]", self.tol));
        }
        if !(self.side > 0.0 && self.side.is_finite()) {
            errs.push(format!("side = {} must be positive", self.side));
        }
        match self.experiment {
            Experiment::SparseBound if self.m >= 13 && (self.m - 1) % 12 != 0 => {
                errs.push(format!(
                    "sparse-bound needs m - 1 divisible by 12 (e.g. 97, 193), got m = {}",
                    self.m
                ));
            }
            Experiment::Iterate => {
                if self.depth == 0 {
                    errs.push("depth must be at least 1".into());
                }
                if self.local_m < 7 || (self.local_m - 1) % 6 != 0 {
                    errs.push(format!(
                        "local_m = {} must be at least 7 with local_m - 1 divisible by 6",
                        self.local_m
                    ));
                }
                if (2..=3).contains(&self.n) {
                    let unit = Cube::unit(self.n).expect("unit cube");
                    if let Err(e) = aligned_grid(&unit, self.variant, self.m) {
                        errs.push(format!("m = {} cannot align the iterate grid: {e}", self.m));
                    }
                }
            }
            _ => {}
        }
    }

    /// Default values, one `key = value` line each, for `--help`.
    pub fn defaults_table() -> String {
        let d = ExperimentConfig::default();
        let grid: Vec<String> = d.q_grid.iter().map(|q| format!("{q:.1}")).collect();
        [
            format!("seed = {}", d.seed),
            format!("n = {}", d.n),
            format!("m = {}", d.m),
            format!("lambda = {}", d.lambda),
            format!("Lambda = {}", d.big_lambda),
            format!("alpha = {}   (p = n/(n + alpha) when p is absent)", d.alpha),
            format!("p = {}", d.p),
            format!("q = {}", d.q),
            format!("eps = {}", d.eps),
            format!("coefficient_class = \"{}\"", d.coefficient_class),
            "experiment = (taken from the subcommand)".to_string(),
            format!("output_dir = \"{}\"", d.output_dir.display()),
            format!("instances = {}", d.instances),
            format!("q_grid = [{}]", grid.join(", ")),
            format!("depth = {}", d.depth),
            format!("local_m = {}", d.local_m),
            "variant = \"lq\"".to_string(),
            format!("side = {}", d.side),
            "duality_kind = \"r\"".to_string(),
            format!("tol = {:e}", d.tol),
        ]
        .join("\n")
    }
}
