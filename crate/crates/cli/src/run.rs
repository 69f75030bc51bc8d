//! Mode drivers.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use pnp_core::diagnostics::{check_positivity, fmt_f64, StepReport};
use pnp_core::grid::CellField;
use pnp_core::mms::{build_paper_case, convergence_table, run_case, step_count, table_from_results};
use pnp_core::oracle::{random_neutral_pair, random_smooth_potential, verify, VerifyOptions};
use pnp_core::poisson::PoissonOptions;
use pnp_core::presets::gaussian_quadrupole;
use pnp_core::transport::{initial_state, step, FixedCharge, SchemeConfig, Species, State};
use pnp_core::{GridSpec, MeanKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, FixedChargePreset, InitialCondition, RunConfig};

/// A structure-preservation check failed; maps to exit code 4.
#[derive(Debug)]
pub struct PropertyFailure(pub String);

impl fmt::Display for PropertyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PropertyFailure {}

/// Test hook: after the given step, one concentration value is overwritten
/// with a negative number before the checks run.
#[derive(Clone, Copy, Debug)]
pub struct Fault {
    pub after_step: usize,
}

const EARLY_STOP_REL: f64 = 1e-12;
const EARLY_STOP_STEPS: usize = 100;

/// Scheme configuration and initial state of the configured problem.
pub fn build_problem(cfg: &RunConfig, dt: f64) -> Result<(SchemeConfig, State)> {
    let spec = cfg.grid()?;
    let species = cfg
        .species
        .iter()
        .map(|s| Species::new(s.name.clone(), s.valence))
        .collect::<pnp_core::Result<Vec<_>>>()?;
    let mut scheme = SchemeConfig::new(cfg.kappa, dt, cfg.mean, species)?;
    scheme.transport_tol = cfg.transport_tol;
    scheme.transport_max_iter = cfg.transport_max_iter;
    scheme.poisson =
        PoissonOptions { tol: cfg.poisson_tol, max_iter: cfg.poisson_max_iter, compat_tol: cfg.compat_tol };
    scheme.fixed_charge = match cfg.fixed_charge {
        FixedChargePreset::None => FixedCharge::None,
        FixedChargePreset::GaussianQuadrupole => FixedCharge::Static(CellField::from_fn(spec, gaussian_quadrupole)),
    };
    let conc = cfg
        .species
        .iter()
        .map(|s| match s.initial {
            InitialCondition::Uniform => CellField::constant(spec, s.value),
        })
        .collect();
    let state = initial_state(conc, &scheme, 0.0).map_err(|e| match e {
        pnp_core::Error::IncompatibleRhs { mean, .. } => anyhow::Error::new(ConfigError(format!(
            "initial data is not electroneutral: mean net charge {mean:e}"
        ))),
        other => other.into(),
    })?;
    Ok((scheme, state))
}

fn create_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Summary of a `simulate` run.
#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub csv: PathBuf,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Advances the configured problem to `t_end` (or until the energy has been
/// flat for 100 consecutive steps), writing one CSV row per report tick.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    let requested = cfg.dt()?;
    let steps = step_count(cfg.t_end, requested)?;
    let dt = cfg.t_end / steps as f64;
    let (scheme, mut state) = build_problem(cfg, dt)?;

    create_output_dir(&cfg.output)?;
    let csv_path = cfg.output.join("simulate.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
    writeln!(csv, "{}", StepReport::csv_header(&scheme.species))?;
    let mut last = StepReport::initial(&state, &scheme, cfg.energy_counting)?;
    writeln!(csv, "{}", last.csv_row())?;

    let mut flat = 0;
    let mut done = 0;
    let mut stopped_early = false;
    let outcome: Result<()> = (|| {
        for k in 1..=steps {
            let out = step(&state, &scheme, None)?;
            let report = StepReport::after_step(k, &state, &out, &scheme, cfg.energy_counting)?;
            state = out.state;
            done = k;
            let change = (report.energy - last.energy).abs();
            flat = if change < EARLY_STOP_REL * (1.0 + last.energy.abs()) { flat + 1 } else { 0 };
            let stop = cfg.early_stop && flat >= EARLY_STOP_STEPS;
            if k % cfg.report_every == 0 || k == steps || stop {
                writeln!(csv, "{}", report.csv_row())?;
            }
            last = report;
            if stop {
                stopped_early = true;
                break;
            }
        }
        Ok(())
    })();
    csv.flush()?;

    let meta_path = cfg.output.join("simulate_meta.txt");
    let meta = format!(
        "mean = {}\nn = {}\ndim = {}\nkappa = {}\ndt_requested = {}\ndt = {}\nt_end = {}\nsteps_planned = {}\nsteps_run = {}\nstopped_early = {}\nearly_stop_rule = |dF| < {:e} (1 + |F|) for {} consecutive steps\nenergy_counting = {:?}\n",
        scheme.mean,
        cfg.n,
        cfg.dim,
        fmt_f64(cfg.kappa),
        fmt_f64(requested),
        fmt_f64(dt),
        fmt_f64(cfg.t_end),
        steps,
        done,
        stopped_early,
        EARLY_STOP_REL,
        EARLY_STOP_STEPS,
        cfg.energy_counting,
    );
    fs::write(&meta_path, meta).with_context(|| format!("writing {}", meta_path.display()))?;
    outcome?;
    info!("simulate: {done} of {steps} steps, csv at {}", csv_path.display());
    Ok(SimulateSummary { csv: csv_path, steps: done, stopped_early })
}

/// Writes one convergence CSV per configured mean; returns their paths.
pub fn run_mms(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let case = build_paper_case();
    create_output_dir(&cfg.output)?;
    let mut paths = Vec::new();
    for &mean in &cfg.mms_means {
        let table = if cfg.mms_n_list.len() == 1 {
            let n = cfg.mms_n_list[0];
            let h = 1.0 / n as f64;
            let r = run_case(&case, n, h * h, cfg.mms_t_end, mean)?;
            table_from_results(&case, mean, vec![r])?
        } else {
            convergence_table(&case, &cfg.mms_n_list, mean, cfg.mms_t_end)?
        };
        let path = cfg.output.join(format!("mms_{}.csv", mean.name()));
        fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        info!("mms: {mean} table at {}", path.display());
        paths.push(path);
    }
    Ok(paths)
}

/// Result of one property check.
#[derive(Clone, Debug)]
pub struct PropertyLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for PropertyLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Runs the configured problem for `properties.steps` steps and checks
/// mass, positivity, energy decay and the dissipation inequality, then
/// runs randomized small-grid positivity trials for every mean.
pub fn run_properties(cfg: &RunConfig, fault: Option<Fault>) -> Result<Vec<PropertyLine>> {
    let spec = cfg.grid()?;
    let (scheme, mut state) = build_problem(cfg, cfg.dt()?)?;
    let counting = cfg.energy_counting;
    let mut prev = StepReport::initial(&state, &scheme, counting)?;
    let m0 = prev.mass.clone();

    let mut drift: f64 = 0.0;
    let mut min_c = f64::INFINITY;
    let mut positivity: Option<String> = None;
    let mut energy_rise = f64::NEG_INFINITY;
    let mut diss_slack = f64::NEG_INFINITY;
    let mut diss_checked = 0;
    let mut steps_run = 0;
    for k in 1..=cfg.property_steps {
        let mut out = step(&state, &scheme, None)?;
        if fault.is_some_and(|f| f.after_step == k) {
            let cell = spec.len() / 3;
            out.state.conc[0].values_mut()[cell] = -1e-3;
            log::warn!("fault injected into `{}` at cell {cell}", scheme.species[0].name);
        }
        if let Err(e) = check_positivity(&out.state.conc, &scheme.species) {
            positivity = Some(format!("step {k}: {e}"));
            steps_run = k;
            break;
        }
        let r = StepReport::after_step(k, &state, &out, &scheme, counting)?;
        for (m, m0) in r.mass.iter().zip(&m0) {
            drift = drift.max((m - m0).abs() / m0.abs());
        }
        min_c = r.min_conc.iter().copied().fold(min_c, f64::min);
        let scale = 1.0 + prev.energy.abs();
        energy_rise = energy_rise.max((r.energy - prev.energy) / scale);
        if let (Some(tau), Some(i_n)) = (r.tau_star, r.dissipation) {
            if scheme.dt <= tau {
                diss_checked += 1;
                diss_slack = diss_slack.max((r.energy - prev.energy + 0.5 * scheme.dt * i_n) / scale);
            }
        }
        prev = r;
        state = out.state;
        steps_run = k;
    }

    let mut lines = vec![
        PropertyLine {
            name: "mass".into(),
            passed: drift <= 1e-12,
            detail: format!("max relative drift {drift:.3e} over {steps_run} steps (limit 1e-12)"),
        },
        match &positivity {
            Some(msg) => PropertyLine { name: "positivity".into(), passed: false, detail: msg.clone() },
            None => PropertyLine {
                name: "positivity".into(),
                passed: min_c > 0.0,
                detail: format!("min concentration {min_c:.6e}"),
            },
        },
        PropertyLine {
            name: "energy".into(),
            passed: energy_rise <= 1e-10,
            detail: format!("max relative increase {energy_rise:.3e} (limit 1e-10)"),
        },
        PropertyLine {
            name: "dissipation".into(),
            passed: diss_slack <= 1e-10,
            detail: if diss_checked == 0 {
                format!("not exercised: dt = {:.3e} exceeded tau* on every step", scheme.dt)
            } else {
                format!("max relative slack {diss_slack:.3e} on {diss_checked} steps with dt <= tau* (limit 1e-10)")
            },
        },
    ];
    if positivity.is_some() {
        for l in lines.iter_mut().filter(|l| l.name != "positivity") {
            l.detail.push_str(&format!(" [stopped at step {steps_run}]"));
        }
    }
    lines.push(random_trials(cfg.property_trials, cfg.seed)?);
    Ok(lines)
}

fn random_trials(trials: usize, seed: u64) -> Result<PropertyLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GridSpec::unit(2, 8)?;
    let species = pnp_core::presets::monovalent_pair();
    let mut failures = Vec::new();
    let mut min_seen = f64::INFINITY;
    for kind in MeanKind::ALL {
        for t in 0..trials {
            let amp = rng.random_range(0.1..8.0);
            let psi = random_smooth_potential(&mut rng, &spec, amp);
            let conc = random_neutral_pair(&mut rng, &spec, 1e-3, 2.0);
            let dt = 10f64.powf(rng.random_range(-4.0..0.0));
            let scheme = SchemeConfig::new(1e-2, dt, kind, species.clone())?;
            let out = step(&State { psi, conc, time: 0.0 }, &scheme, None)?;
            match check_positivity(&out.state.conc, &species) {
                Ok(()) => {
                    min_seen = out.state.conc.iter().map(CellField::min).fold(min_seen, f64::min);
                }
                Err(e) => failures.push(format!("{kind} trial {t}: {e}")),
            }
        }
    }
    let total = trials * MeanKind::ALL.len();
    Ok(PropertyLine {
        name: "random-trials".into(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{total} trials on n = 8, min concentration {min_seen:.3e}")
        } else {
            format!("{} of {total} trials lost positivity; first: {}", failures.len(), failures[0])
        },
    })
}

/// Runs the dense-oracle cross-checks for every configured dimension.
pub fn run_verify(cfg: &RunConfig) -> Result<Vec<PropertyLine>> {
    let mut lines = Vec::new();
    for &dim in &cfg.verify_dims {
        let report = verify(&VerifyOptions {
            dim,
            n: cfg.verify_size,
            trials: cfg.verify_trials,
            seed: cfg.seed,
            ..VerifyOptions::default()
        })?;
        for c in report.comparisons {
            lines.push(PropertyLine {
                name: format!("{dim}-D {}", c.name),
                passed: c.passed(),
                detail: format!("{:.3e} (limit {:.0e})", c.deviation, c.tolerance),
            });
        }
    }
    Ok(lines)
}

/// Fails with [`PropertyFailure`] if any line failed.
pub fn require_all(lines: &[PropertyLine]) -> Result<()> {
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(PropertyFailure(format!("failed: {}", failed.join(", "))).into())
    }
}
