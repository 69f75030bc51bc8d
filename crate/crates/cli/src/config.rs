//! Run configuration: TOML with one level of sections, unknown keys
//! rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use pnp_core::diagnostics::EnergyCounting;
use pnp_core::grid::GridSpec;
use pnp_core::MeanKind;
use serde::Deserialize;

/// Invalid configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Mms,
    Properties,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedChargePreset {
    None,
    GaussianQuadrupole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Counting {
    PerSpecies,
    Once,
}

impl From<Counting> for EnergyCounting {
    fn from(c: Counting) -> Self {
        match c {
            Counting::PerSpecies => EnergyCounting::PerSpecies,
            Counting::Once => EnergyCounting::Once,
        }
    }
}

// Raw file layout. Every field is optional so that defaults and overrides
// can be layered before validation.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    scheme: RawScheme,
    #[serde(default)]
    solver: RawSolver,
    species: Option<Vec<RawSpecies>>,
    #[serde(default)]
    charge: RawCharge,
    #[serde(default)]
    mms: RawMms,
    #[serde(default)]
    properties: RawProperties,
    #[serde(default)]
    verify: RawVerify,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<Mode>,
    output: Option<PathBuf>,
    seed: Option<u64>,
    report_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: Option<usize>,
    n: Option<usize>,
    lo: Option<f64>,
    hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: Option<f64>,
    dt_rule: Option<String>,
    t_end: Option<f64>,
    early_stop: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    mean: Option<String>,
    kappa: Option<f64>,
    energy_counting: Option<Counting>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    transport_tol: Option<f64>,
    transport_max_iter: Option<usize>,
    poisson_tol: Option<f64>,
    poisson_max_iter: Option<usize>,
    compat_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    name: String,
    valence: f64,
    initial: Option<InitialCondition>,
    value: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCharge {
    fixed: Option<FixedChargePreset>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMms {
    n_list: Option<Vec<usize>>,
    means: Option<Vec<String>>,
    t_end: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProperties {
    steps: Option<usize>,
    trials: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    size: Option<usize>,
    dims: Option<Vec<usize>>,
    trials: Option<usize>,
}

/// How the time step is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// `h / k`.
    HOver(f64),
    /// `k h²`.
    HSquared(f64),
}

impl StepRule {
    pub fn dt(&self, h: f64) -> f64 {
        match *self {
            StepRule::Fixed(dt) => dt,
            StepRule::HOver(k) => h / k,
            StepRule::HSquared(k) => k * h * h,
        }
    }
}

impl FromStr for StepRule {
    type Err = String;

    /// Accepts `h/K`, `h^2` and `K*h^2`.
    fn from_str(s: &str) -> Result<Self, String> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let number = |v: &str| v.parse::<f64>().ok().filter(|k| *k > 0.0 && k.is_finite());
        if let Some(k) = t.strip_prefix("h/").and_then(number) {
            return Ok(StepRule::HOver(k));
        }
        if t == "h^2" {
            return Ok(StepRule::HSquared(1.0));
        }
        if let Some(k) = t.strip_suffix("*h^2").and_then(number) {
            return Ok(StepRule::HSquared(k));
        }
        Err(format!("unrecognized step rule `{s}` (expected h/K, h^2 or K*h^2)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesConfig {
    pub name: String,
    pub valence: f64,
    pub initial: InitialCondition,
    pub value: f64,
}

/// Validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub output: PathBuf,
    pub seed: u64,
    pub report_every: usize,
    pub dim: usize,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub step_rule: StepRule,
    pub t_end: f64,
    pub early_stop: bool,
    pub mean: MeanKind,
    /// False when the mean fell back to the default.
    pub mean_given: bool,
    pub kappa: f64,
    pub energy_counting: EnergyCounting,
    pub transport_tol: f64,
    pub transport_max_iter: Option<usize>,
    pub poisson_tol: f64,
    pub poisson_max_iter: Option<usize>,
    pub compat_tol: f64,
    pub species: Vec<SpeciesConfig>,
    pub fixed_charge: FixedChargePreset,
    pub mms_n_list: Vec<usize>,
    pub mms_means: Vec<MeanKind>,
    pub mms_t_end: f64,
    pub property_steps: usize,
    pub property_trials: usize,
    pub verify_size: usize,
    pub verify_dims: Vec<usize>,
    pub verify_trials: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub mean: Option<String>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub verify_size: Option<usize>,
}

pub const DEFAULT_MEAN: MeanKind = MeanKind::Harmonic;

/// 1-based line of the first `key = ...` inside `[section]`, if any.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            current = name.trim().to_string();
        } else if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: &str, msg: impl fmt::Display) -> ConfigError {
        let at = locate(self.text, section, key).map(|l| format!(" (line {l})")).unwrap_or_default();
        ConfigError(format!("invalid `{section}.{key}`{at}: {msg}"))
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(section, key, format!("must be positive and finite, got {v}")))
        }
    }
}

fn parse_mean(s: &str) -> Result<MeanKind, String> {
    s.parse::<MeanKind>().map_err(|e| e.to_string())
}

/// Parses and validates a configuration text, applying `over` on top.
pub fn parse_config(text: &str, over: &Overrides) -> Result<RunConfig, ConfigError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
    let ck = Checker { text };

    let mode = over.mode.or(raw.run.mode).unwrap_or(Mode::Simulate);
    let output = over.output.clone().or(raw.run.output).unwrap_or_else(|| PathBuf::from("output"));
    let seed = over.seed.or(raw.run.seed).unwrap_or(0);
    let report_every = raw.run.report_every.unwrap_or(1);
    if report_every == 0 {
        return Err(ck.fail("run", "report_every", "must be at least 1"));
    }

    let dim = raw.grid.dim.unwrap_or(2);
    if !(1..=3).contains(&dim) {
        return Err(ck.fail("grid", "dim", format!("must be 1, 2 or 3, got {dim}")));
    }
    let n = over.n.or(raw.grid.n).unwrap_or(80);
    if n < 2 {
        return Err(ck.fail("grid", "n", format!("need at least 2 cells, got {n}")));
    }
    let lo = raw.grid.lo.unwrap_or(0.0);
    let hi = raw.grid.hi.unwrap_or(1.0);
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(ck.fail("grid", "hi", format!("domain [{lo}, {hi}] is empty or not finite")));
    }

    let step_rule = match (over.dt, raw.time.dt, raw.time.dt_rule.as_deref()) {
        (Some(dt), _, _) => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ConfigError(format!("invalid `--dt`: must be positive and finite, got {dt}")));
            }
            StepRule::Fixed(dt)
        }
        (None, Some(_), Some(_)) => {
            return Err(ck.fail("time", "dt_rule", "give either `dt` or `dt_rule`, not both"));
        }
        (None, Some(dt), None) => StepRule::Fixed(ck.positive("time", "dt", dt)?),
        (None, None, Some(rule)) => rule.parse().map_err(|e| ck.fail("time", "dt_rule", e))?,
        (None, None, None) => StepRule::HOver(10.0),
    };
    let t_end = ck.positive("time", "t_end", raw.time.t_end.unwrap_or(5.0))?;
    let early_stop = raw.time.early_stop.unwrap_or(true);

    let (mean, mean_given) = match over.mean.as_deref().or(raw.scheme.mean.as_deref()) {
        Some(s) => {
            let m = parse_mean(s).map_err(|e| match over.mean {
                Some(_) => ConfigError(format!("invalid `--mean`: {e}")),
                None => ck.fail("scheme", "mean", e),
            })?;
            (m, true)
        }
        None => (DEFAULT_MEAN, false),
    };
    let kappa = ck.positive("scheme", "kappa", raw.scheme.kappa.unwrap_or(1e-3))?;
    let energy_counting = raw.scheme.energy_counting.unwrap_or(Counting::PerSpecies).into();

    let transport_tol = ck.positive("solver", "transport_tol", raw.solver.transport_tol.unwrap_or(1e-11))?;
    let poisson_tol = ck.positive("solver", "poisson_tol", raw.solver.poisson_tol.unwrap_or(1e-10))?;
    let compat_tol = ck.positive("solver", "compat_tol", raw.solver.compat_tol.unwrap_or(1e-10))?;
    if raw.solver.transport_max_iter == Some(0) {
        return Err(ck.fail("solver", "transport_max_iter", "must be at least 1"));
    }
    if raw.solver.poisson_max_iter == Some(0) {
        return Err(ck.fail("solver", "poisson_max_iter", "must be at least 1"));
    }

    let species = match raw.species {
        Some(list) => {
            if list.is_empty() {
                return Err(ConfigError("invalid `species`: at least one species is required".into()));
            }
            let mut out = Vec::with_capacity(list.len());
            for s in list {
                if s.name.is_empty() || s.name.contains(',') {
                    return Err(ck.fail("species", "name", format!("`{}` is not a usable column name", s.name)));
                }
                if out.iter().any(|o: &SpeciesConfig| o.name == s.name) {
                    return Err(ck.fail("species", "name", format!("duplicate species `{}`", s.name)));
                }
                if !s.valence.is_finite() {
                    return Err(ck.fail("species", "valence", "must be finite"));
                }
                let value = ck.positive("species", "value", s.value)?;
                out.push(SpeciesConfig {
                    name: s.name,
                    valence: s.valence,
                    initial: s.initial.unwrap_or(InitialCondition::Uniform),
                    value,
                });
            }
            out
        }
        None => vec![
            SpeciesConfig { name: "cation".into(), valence: 1.0, initial: InitialCondition::Uniform, value: 0.1 },
            SpeciesConfig { name: "anion".into(), valence: -1.0, initial: InitialCondition::Uniform, value: 0.1 },
        ],
    };
    let fixed_charge = raw.charge.fixed.unwrap_or(FixedChargePreset::GaussianQuadrupole);
    if fixed_charge == FixedChargePreset::GaussianQuadrupole && dim != 2 {
        return Err(ck.fail("charge", "fixed", "the gaussian-quadrupole preset needs a 2-D grid"));
    }

    let mms_n_list = raw.mms.n_list.unwrap_or_else(|| vec![50, 60, 70, 80, 90]);
    if mms_n_list.is_empty() {
        return Err(ck.fail("mms", "n_list", "must not be empty"));
    }
    if mms_n_list.windows(2).any(|w| w[1] <= w[0]) || mms_n_list[0] < 2 {
        return Err(ck.fail("mms", "n_list", format!("must be strictly increasing sizes >= 2, got {mms_n_list:?}")));
    }
    let mms_means = match (&over.mean, raw.mms.means) {
        (Some(_), _) => vec![mean],
        (None, Some(list)) => {
            if list.is_empty() {
                return Err(ck.fail("mms", "means", "must not be empty"));
            }
            list.iter().map(|s| parse_mean(s)).collect::<Result<Vec<_>, _>>().map_err(|e| ck.fail("mms", "means", e))?
        }
        (None, None) if mean_given => vec![mean],
        (None, None) => MeanKind::ALL.to_vec(),
    };
    let mms_t_end = ck.positive("mms", "t_end", raw.mms.t_end.unwrap_or(0.1))?;

    let property_steps = raw.properties.steps.unwrap_or(2000);
    if property_steps == 0 {
        return Err(ck.fail("properties", "steps", "must be at least 1"));
    }
    let property_trials = raw.properties.trials.unwrap_or(250);

    let verify_size = over.verify_size.or(raw.verify.size).unwrap_or(8);
    if verify_size < 2 {
        return Err(match over.verify_size {
            Some(_) => ConfigError(format!("invalid `--verify-size`: need at least 2, got {verify_size}")),
            None => ck.fail("verify", "size", format!("need at least 2, got {verify_size}")),
        });
    }
    let verify_dims = raw.verify.dims.unwrap_or_else(|| vec![1, 2]);
    if verify_dims.is_empty() || verify_dims.iter().any(|d| !(1..=3).contains(d)) {
        return Err(ck.fail("verify", "dims", format!("dimensions must be 1, 2 or 3, got {verify_dims:?}")));
    }
    for &d in &verify_dims {
        let cells = verify_size.pow(d as u32);
        if cells > pnp_core::oracle::MAX_CELLS {
            return Err(ConfigError(format!(
                "verify size {verify_size} in {d}-D gives {cells} cells, above the dense limit {}",
                pnp_core::oracle::MAX_CELLS
            )));
        }
    }
    let verify_trials = raw.verify.trials.unwrap_or(100);
    if verify_trials == 0 {
        return Err(ck.fail("verify", "trials", "must be at least 1"));
    }

    Ok(RunConfig {
        mode,
        output,
        seed,
        report_every,
        dim,
        n,
        lo,
        hi,
        step_rule,
        t_end,
        early_stop,
        mean,
        mean_given,
        kappa,
        energy_counting,
        transport_tol,
        transport_max_iter: raw.solver.transport_max_iter,
        poisson_tol,
        poisson_max_iter: raw.solver.poisson_max_iter,
        compat_tol,
        species,
        fixed_charge,
        mms_n_list,
        mms_means,
        mms_t_end,
        property_steps,
        property_trials,
        verify_size,
        verify_dims,
        verify_trials,
    })
}

impl RunConfig {
    pub fn grid(&self) -> pnp_core::Result<GridSpec> {
        GridSpec::new(self.dim, self.n, self.lo, self.hi)
    }

    pub fn dt(&self) -> pnp_core::Result<f64> {
        Ok(self.step_rule.dt(self.grid()?.h()))
    }
}
