//! Run configuration. One file (TOML, or JSON by extension) drives every
//! subcommand; unknown keys are rejected and errors carry key paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cbc_core::data::MonomialBasis;
use cbc_core::poly::Monomial;
use cbc_core::sdp::SolverOptions;
use cbc_core::synthesis::{BoxSet, MultiplierDegrees, SemiAlgebraicSet, SynthesisProblem};
use cbc_core::verify::VerifyOptions;
use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {key}: {msg}", file.display())]
    Schema { file: PathBuf, key: String, msg: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: PathBuf,
    n: usize,
    m: usize,
    basis: RawBasis,
    #[serde(default)]
    theta: BTreeMap<String, String>,
    sets: RawSets,
    #[serde(default)]
    synthesis: RawSynthesis,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    verify: RawVerify,
    reference: Option<RawReference>,
    #[serde(default)]
    seed: u64,
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    monomials: Option<Vec<String>>,
    max_degree: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSets {
    x: Vec<RawBox>,
    x0: Vec<RawBox>,
    xu: Vec<RawBox>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSynthesis {
    deg_h: Option<u32>,
    deg_mult: u32,
    deg_mult_initial: Option<u32>,
    deg_mult_unsafe: Option<u32>,
    epsilon: f64,
    delta_rel: f64,
}

impl Default for RawSynthesis {
    fn default() -> Self {
        RawSynthesis {
            deg_h: None,
            deg_mult: 2,
            deg_mult_initial: None,
            deg_mult_unsafe: None,
            epsilon: 1e-6,
            delta_rel: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Builtin,
    External,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    backend: BackendKind,
    command: Vec<String>,
    feas_tol: f64,
    gap_tol: f64,
    max_iter: usize,
}

impl Default for RawSolver {
    fn default() -> Self {
        let d = SolverOptions::default();
        RawSolver {
            backend: BackendKind::Builtin,
            command: Vec::new(),
            feas_tol: d.feas_tol,
            gap_tol: d.gap_tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawVerify {
    grid_density: usize,
    random_points: usize,
    theta_points: usize,
    rollouts: usize,
    horizon: usize,
}

impl Default for RawVerify {
    fn default() -> Self {
        let d = VerifyOptions::default();
        RawVerify {
            grid_density: d.grid_density,
            random_points: d.random_points,
            theta_points: d.theta_points,
            rollouts: d.rollouts,
            horizon: d.horizon,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    p: Vec<Vec<f64>>,
    alpha: Option<[f64; 2]>,
}

/// A reference certificate to be checked with the same verifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub p: DMatrix<f64>,
    pub alpha: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Builtin,
    External { command: Vec<String> },
}

impl BackendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Builtin => "builtin",
            BackendSpec::External { .. } => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// File stem of the configuration, used in reports.
    pub name: String,
    pub data: PathBuf,
    pub n: usize,
    pub m: usize,
    pub problem: SynthesisProblem,
    /// `deg_h` was not given and defaults to (max basis degree - 1).
    pub deg_h_defaulted: bool,
    pub backend: BackendSpec,
    pub verify: VerifyOptions,
    pub reference: Option<Reference>,
    pub out: PathBuf,
    pub seed: u64,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub feas_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub epsilon_pd: Option<f64>,
    pub backend: Option<BackendKind>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    let schema = |key: String, msg: String| ConfigError::Schema {
        file: path.to_owned(),
        key,
        msg,
    };
    let raw: RawConfig = if path.extension().is_some_and(|e| e == "json") {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| schema(e.path().to_string(), e.inner().to_string()))?
    } else {
        let de = toml::Deserializer::new(&text);
        serde_path_to_error::deserialize(de).map_err(|e| schema(e.path().to_string(), e.inner().message().to_owned()))?
    };
    let base = path.parent().unwrap_or(Path::new(""));
    validate(raw, base, path, ov).map_err(|(key, msg)| schema(key, msg))
}

type Invalid = (String, String);

fn bad<T>(key: impl Into<String>, msg: impl Into<String>) -> Result<T, Invalid> {
    Err((key.into(), msg.into()))
}

fn validate(raw: RawConfig, base: &Path, path: &Path, ov: &Overrides) -> Result<RunConfig, Invalid> {
    let n = raw.n;
    if n == 0 {
        return bad("n", "must be at least 1");
    }
    if raw.m == 0 {
        return bad("m", "must be at least 1");
    }
    let data = base.join(&raw.data);
    if !data.is_file() {
        return bad("data", format!("{} does not exist", data.display()));
    }

    let basis = match (&raw.basis.monomials, raw.basis.max_degree) {
        (Some(list), None) => {
            let mut entries = Vec::with_capacity(list.len());
            for (i, t) in list.iter().enumerate() {
                let m = Monomial::parse(t, n).map_err(|e| (format!("basis.monomials[{i}]"), e.to_string()))?;
                entries.push(m);
            }
            MonomialBasis::new(n, entries).map_err(|e| ("basis.monomials".to_owned(), e.to_string()))?
        }
        (None, Some(d)) if d >= 1 => MonomialBasis::up_to_degree(n, d),
        (None, Some(_)) => return bad("basis.max_degree", "must be at least 1"),
        _ => return bad("basis", "give exactly one of `monomials` and `max_degree`"),
    };

    let mut overrides = BTreeMap::new();
    for (mono, var) in &raw.theta {
        let key = format!("theta.{mono}");
        let m = Monomial::parse(mono, n).map_err(|e| (key.clone(), e.to_string()))?;
        if !basis.entries().contains(&m) {
            return bad(key, "not a basis monomial");
        }
        let v = var
            .strip_prefix('x')
            .and_then(|i| i.parse::<usize>().ok())
            .filter(|&i| (1..=n).contains(&i))
            .ok_or_else(|| (key.clone(), format!("`{var}` is not a state variable")))?;
        if m.exponents()[v - 1] == 0 {
            return bad(key, format!("{var} does not divide {mono}"));
        }
        overrides.insert(m, v - 1);
    }

    let x_set = set_of(&raw.sets.x, "sets.x", n)?;
    if x_set.boxes.len() != 1 {
        return bad("sets.x", "the state set must be a single box");
    }
    let x0 = set_of(&raw.sets.x0, "sets.x0", n)?;
    let xu = set_of(&raw.sets.xu, "sets.xu", n)?;
    for (i, a) in x0.boxes.iter().enumerate() {
        for (j, b) in xu.boxes.iter().enumerate() {
            if a.overlaps(b) {
                return bad(format!("sets.x0[{i}]"), format!("overlaps sets.xu[{j}]"));
            }
        }
    }

    let s = &raw.synthesis;
    let deg_h = s.deg_h.unwrap_or(basis.max_degree().saturating_sub(1));
    let multipliers = MultiplierDegrees {
        state: s.deg_mult,
        initial: s.deg_mult_initial.unwrap_or(s.deg_mult),
        unsafe_set: s.deg_mult_unsafe.unwrap_or(s.deg_mult),
    };
    for (key, d) in [
        ("synthesis.deg_mult", multipliers.state),
        ("synthesis.deg_mult_initial", multipliers.initial),
        ("synthesis.deg_mult_unsafe", multipliers.unsafe_set),
    ] {
        if d % 2 != 0 {
            return bad(key, "multiplier degrees must be even");
        }
    }
    let epsilon = ov.epsilon_pd.unwrap_or(s.epsilon);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return bad("synthesis.epsilon", "must be positive");
    }
    if !(s.delta_rel >= 0.0 && s.delta_rel.is_finite()) {
        return bad("synthesis.delta_rel", "must be non-negative");
    }

    let r = &raw.solver;
    let solver = SolverOptions {
        feas_tol: ov.feas_tol.unwrap_or(r.feas_tol),
        gap_tol: r.gap_tol,
        max_iter: ov.max_iter.unwrap_or(r.max_iter),
    };
    if !(solver.feas_tol > 0.0 && solver.feas_tol < 1.0) {
        return bad("solver.feas_tol", "must lie in (0, 1)");
    }
    if !(solver.gap_tol > 0.0 && solver.gap_tol < 1.0) {
        return bad("solver.gap_tol", "must lie in (0, 1)");
    }
    if solver.max_iter == 0 {
        return bad("solver.max_iter", "must be at least 1");
    }
    let backend = match ov.backend.unwrap_or(r.backend) {
        BackendKind::Builtin => BackendSpec::Builtin,
        BackendKind::External if r.command.is_empty() => {
            return bad("solver.command", "the external backend needs a command")
        }
        BackendKind::External => BackendSpec::External {
            command: r.command.clone(),
        },
    };

    let v = &raw.verify;
    if v.grid_density == 1 {
        return bad("verify.grid_density", "use 0 for the default or at least 2");
    }
    if v.horizon == 0 {
        return bad("verify.horizon", "must be at least 1");
    }
    let seed = ov.seed.unwrap_or(raw.seed);
    let verify = VerifyOptions {
        grid_density: v.grid_density,
        random_points: v.random_points,
        theta_points: v.theta_points,
        rollouts: v.rollouts,
        horizon: v.horizon,
        seed,
    };

    let reference = match &raw.reference {
        None => None,
        Some(r) => {
            if r.p.len() != n || r.p.iter().any(|row| row.len() != n) {
                return bad("reference.p", format!("must be {n}x{n}"));
            }
            let p = DMatrix::from_fn(n, n, |i, j| r.p[i][j]);
            if (&p - p.transpose()).amax() > 1e-12 * p.amax() {
                return bad("reference.p", "must be symmetric");
            }
            if let Some([a1, a2]) = r.alpha {
                if !(a1 < a2) {
                    return bad("reference.alpha", "needs alpha1 < alpha2");
                }
            }
            Some(Reference {
                p,
                alpha: r.alpha.map(|[a, b]| (a, b)),
            })
        }
    };

    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let out = match (&ov.out, &raw.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => Path::new("out").join(&name),
    };

    Ok(RunConfig {
        name,
        data,
        n,
        m: raw.m,
        problem: SynthesisProblem {
            basis,
            overrides,
            x_set,
            x0,
            xu,
            deg_h,
            multipliers,
            epsilon,
            delta_rel: s.delta_rel,
            solver,
        },
        deg_h_defaulted: s.deg_h.is_none(),
        backend,
        verify,
        reference,
        out,
        seed,
    })
}

fn set_of(boxes: &[RawBox], key: &str, n: usize) -> Result<SemiAlgebraicSet, Invalid> {
    if boxes.is_empty() {
        return bad(key, "needs at least one box");
    }
    let mut out = Vec::with_capacity(boxes.len());
    for (i, b) in boxes.iter().enumerate() {
        let k = format!("{key}[{i}]");
        if b.lo.len() != n || b.hi.len() != n {
            return bad(k, format!("lo and hi need {n} entries"));
        }
        for (j, (l, h)) in b.lo.iter().zip(&b.hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) {
                return bad(format!("{k}.lo[{j}]"), "bounds must be finite");
            }
            if l > h {
                return bad(format!("{k}.lo[{j}]"), format!("lower bound {l} exceeds upper bound {h}"));
            }
        }
        out.push(BoxSet::new(b.lo.clone(), b.hi.clone()));
    }
    SemiAlgebraicSet::new(out).map_err(|e| (key.to_owned(), e.to_string()))
}
