//! The semi-implicit Slotboom step.
//!
//! Each species is advanced with the potential frozen at the old level:
//!
//! ```text
//! (c^{n+1} - c^n) / Δt = ∇_h · (M ∇_h g),   g = c^{n+1} e^{S},  S = q ψ^n,
//! ```
//!
//! where `M` is the face mobility of the selected mean. Written for `g`,
//! the system `(e^{-S} ⊙ g)/Δt - ∇_h·(M ∇_h g) = c^n/Δt` is symmetric
//! positive definite and is solved with Jacobi-preconditioned CG. The new
//! concentration is then read off the conservative update
//! `c^{n+1} = c^n + Δt ∇_h·(M ∇_h g)`, which equals `e^{-S} ⊙ g` up to the
//! solver residual and conserves mass to rounding. The potential is
//! updated afterwards from the zero-mean Poisson problem.

use std::fmt;
use std::sync::Arc;

use crate::grid::{weighted_laplacian_into, CellField, FaceField, GridSpec};
use crate::linsolve::{pcg, CgOptions, SolveStats};
use crate::mobility::{face_mobility, MeanKind, SlotboomExponent};
use crate::poisson::{poisson_residual, solve_poisson_from, PoissonOptions, PoissonProblem};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Species {
    pub name: String,
    /// Valence `q` (dimensionless).
    pub valence: f64,
}

impl Species {
    pub fn new(name: impl Into<String>, valence: f64) -> Result<Self> {
        if !valence.is_finite() {
            return Err(Error::InvalidParameter(format!("valence must be finite, got {valence}")));
        }
        Ok(Self { name: name.into(), valence })
    }
}

/// Potential and concentrations at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub psi: CellField,
    pub conc: Vec<CellField>,
    pub time: f64,
}

impl State {
    pub fn spec(&self) -> &GridSpec {
        self.psi.spec()
    }

    fn check(&self, species: usize) -> Result<()> {
        if self.conc.len() != species {
            return Err(Error::InvalidParameter(format!(
                "state holds {} concentrations for {species} species",
                self.conc.len()
            )));
        }
        for c in &self.conc {
            c.check_same_grid(self.psi.spec())?;
        }
        Ok(())
    }
}

pub type ChargeFn = Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>;

/// Fixed charge density `ρ^f`.
#[derive(Clone, Default)]
pub enum FixedCharge {
    #[default]
    None,
    Static(CellField),
    /// Sampled at cell centers at the requested time.
    TimeDependent(ChargeFn),
}

impl FixedCharge {
    pub fn at(&self, spec: &GridSpec, t: f64) -> Result<CellField> {
        match self {
            FixedCharge::None => Ok(CellField::zeros(*spec)),
            FixedCharge::Static(f) => {
                f.check_same_grid(spec)?;
                Ok(f.clone())
            }
            FixedCharge::TimeDependent(rho) => Ok(CellField::from_fn(*spec, |x| rho(x, t))),
        }
    }
}

impl fmt::Debug for FixedCharge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixedCharge::None => f.write_str("None"),
            FixedCharge::Static(c) => f.debug_tuple("Static").field(c.spec()).finish(),
            FixedCharge::TimeDependent(_) => f.write_str("TimeDependent(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub kappa: f64,
    pub dt: f64,
    pub mean: MeanKind,
    pub species: Vec<Species>,
    pub poisson: PoissonOptions,
    /// Relative residual target of the per-species solve.
    pub transport_tol: f64,
    /// Iteration cap of the per-species solve; `None` means `10 n^dim`.
    pub transport_max_iter: Option<usize>,
    pub fixed_charge: FixedCharge,
}

impl SchemeConfig {
    pub fn new(kappa: f64, dt: f64, mean: MeanKind, species: Vec<Species>) -> Result<Self> {
        let cfg = Self {
            kappa,
            dt,
            mean,
            species,
            poisson: PoissonOptions::default(),
            transport_tol: 1e-11,
            transport_max_iter: None,
            fixed_charge: FixedCharge::None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_fixed_charge(mut self, rho: FixedCharge) -> Self {
        self.fixed_charge = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.species.is_empty() {
            return Err(Error::InvalidParameter("at least one species is required".into()));
        }
        if !(self.transport_tol > 0.0 && self.poisson.tol > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn check_positive(values: &[f64], what: &str) -> Result<()> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!("{what} must be strictly positive, cell/face {i} has {v:e}")));
    }
    Ok(())
}

/// `(w ⊙ g)/Δt - ∇_h·(M ∇_h g)`.
pub fn apply_transport_operator(
    w: &CellField,
    mobility: &FaceField,
    dt: f64,
    g: &CellField,
) -> Result<CellField> {
    w.check_same_grid(g.spec())?;
    w.check_same_grid(mobility.spec())?;
    check_positive(w.values(), "cell weight")?;
    for c in mobility.components() {
        check_positive(c, "face mobility")?;
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let op = TransportOperator { w: w.values(), mobility, dt };
    let mut out = CellField::zeros(*g.spec());
    op.apply_into(g.values(), out.values_mut());
    Ok(out)
}

struct TransportOperator<'a> {
    w: &'a [f64],
    mobility: &'a FaceField,
    dt: f64,
}

impl TransportOperator<'_> {
    fn apply_into(&self, g: &[f64], out: &mut [f64]) {
        weighted_laplacian_into(self.mobility, g, out);
        for ((o, w), g) in out.iter_mut().zip(self.w).zip(g) {
            *o = w * g / self.dt - *o;
        }
    }

    fn inverse_diagonal(&self) -> Vec<f64> {
        let spec = self.mobility.spec();
        let h2 = spec.h() * spec.h();
        let comps = self.mobility.components();
        (0..spec.len())
            .map(|i| {
                let faces: f64 = (0..spec.dim())
                    .map(|axis| comps[axis][i] + comps[axis][spec.minus(i, axis)])
                    .sum();
                1.0 / (self.w[i] / self.dt + faces / h2)
            })
            .collect()
    }
}

/// CG solve of an SPD system given as a closure, from a zero guess and
/// without preconditioning.
pub fn solve_spd(
    apply: impl FnMut(&[f64], &mut [f64]),
    rhs: &CellField,
    tol: f64,
    cap: usize,
) -> Result<(CellField, SolveStats)> {
    let mut x = CellField::zeros(*rhs.spec());
    let opts = CgOptions { tol, max_iter: cap, project_mean: false };
    let stats = pcg(apply, None, rhs.values(), x.values_mut(), &opts)?;
    Ok((x, stats))
}

/// Result of advancing one species.
#[derive(Clone, Debug)]
pub struct SpeciesStep {
    pub conc: CellField,
    /// Slotboom variable `g = c^{n+1} e^{q ψ^n}` from the linear solve.
    pub slotboom: CellField,
    pub stats: SolveStats,
}

/// Advances one species by `cfg.dt` with the lagged potential `psi`.
/// `source`, if given, is added to the right-hand side (manufactured
/// solutions); without it the new concentration must stay positive.
pub fn step_species(
    conc: &CellField,
    psi: &CellField,
    species: &Species,
    cfg: &SchemeConfig,
    source: Option<&CellField>,
) -> Result<SpeciesStep> {
    let spec = *conc.spec();
    conc.check_same_grid(psi.spec())?;
    if let Some(s) = source {
        s.check_same_grid(&spec)?;
    }
    let dt = cfg.dt;
    let exponent = SlotboomExponent::from_potential(psi, species.valence)?;
    let w = exponent.cell_weight();
    let mobility = face_mobility(&exponent, cfg.mean);
    let op = TransportOperator { w: w.values(), mobility: &mobility, dt };
    let inv_diag = op.inverse_diagonal();

    let rhs: Vec<f64> = match source {
        Some(s) => conc.values().iter().zip(s.values()).map(|(c, f)| c / dt + f).collect(),
        None => conc.values().iter().map(|c| c / dt).collect(),
    };
    let mut g = conc.zip_map(&w, |c, w| c / w)?;
    let opts = CgOptions {
        tol: cfg.transport_tol,
        max_iter: cfg.transport_max_iter.unwrap_or(10 * spec.len()),
        project_mean: false,
    };
    let stats = pcg(|v, out| op.apply_into(v, out), Some(&inv_diag), &rhs, g.values_mut(), &opts)?;

    let mut next = CellField::zeros(spec);
    weighted_laplacian_into(&mobility, g.values(), next.values_mut());
    let c0 = conc.values();
    match source {
        Some(s) => {
            let f = s.values();
            for (i, v) in next.values_mut().iter_mut().enumerate() {
                *v = c0[i] + dt * (*v + f[i]);
            }
        }
        None => {
            for (i, v) in next.values_mut().iter_mut().enumerate() {
                *v = c0[i] + dt * *v;
            }
            let (index, value) = next.argmin();
            if !(value > 0.0) {
                return Err(Error::PositivityViolation {
                    species: species.name.clone(),
                    index,
                    value,
                });
            }
        }
    }
    Ok(SpeciesStep { conc: next, slotboom: g, stats })
}

/// `Σ_l q^l c^l + ρ^f(t)`.
pub fn charge_density(conc: &[CellField], cfg: &SchemeConfig, t: f64) -> Result<CellField> {
    let spec = *conc
        .first()
        .ok_or_else(|| Error::InvalidParameter("no concentrations given".into()))?
        .spec();
    let mut rho = cfg.fixed_charge.at(&spec, t)?;
    for (c, sp) in conc.iter().zip(&cfg.species) {
        c.check_same_grid(&spec)?;
        for (r, v) in rho.values_mut().iter_mut().zip(c.values()) {
            *r += sp.valence * v;
        }
    }
    Ok(rho)
}

/// Builds the state at time `t` from concentrations by solving the Poisson
/// problem for the potential.
pub fn initial_state(conc: Vec<CellField>, cfg: &SchemeConfig, t: f64) -> Result<State> {
    cfg.validate()?;
    let rho = charge_density(&conc, cfg, t)?;
    let problem = PoissonProblem::new(cfg.kappa, rho)?;
    let (psi, _) = solve_poisson_from(&problem, &cfg.poisson, None)?;
    let state = State { psi, conc, time: t };
    state.check(cfg.species.len())?;
    Ok(state)
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    /// Slotboom variables of the species solves, in species order.
    pub slotboom: Vec<CellField>,
    pub species_stats: Vec<SolveStats>,
    pub poisson_stats: SolveStats,
    /// `‖κ Δ_h ψ^{n+1} + ρ^{n+1}‖_2`.
    pub poisson_residual: f64,
}

/// One full step: every species with the same lagged potential, then the
/// Poisson update with the fixed charge evaluated at the new time.
/// `sources` holds one optional source per species, already evaluated at
/// the new time.
pub fn step(state: &State, cfg: &SchemeConfig, sources: Option<&[CellField]>) -> Result<StepOutcome> {
    cfg.validate()?;
    state.check(cfg.species.len())?;
    if let Some(s) = sources {
        if s.len() != cfg.species.len() {
            return Err(Error::InvalidParameter(format!(
                "{} sources given for {} species",
                s.len(),
                cfg.species.len()
            )));
        }
    }
    let mut conc = Vec::with_capacity(cfg.species.len());
    let mut slotboom = Vec::with_capacity(cfg.species.len());
    let mut species_stats = Vec::with_capacity(cfg.species.len());
    for (l, sp) in cfg.species.iter().enumerate() {
        let source = sources.map(|s| &s[l]);
        let out = step_species(&state.conc[l], &state.psi, sp, cfg, source)?;
        conc.push(out.conc);
        slotboom.push(out.slotboom);
        species_stats.push(out.stats);
    }
    let time = state.time + cfg.dt;
    let rho = charge_density(&conc, cfg, time)?;
    let problem = PoissonProblem::new(cfg.kappa, rho)?;
    let (psi, poisson_stats) = solve_poisson_from(&problem, &cfg.poisson, Some(&state.psi))?;
    let poisson_residual = poisson_residual(&psi, &problem)?;
    Ok(StepOutcome {
        state: State { psi, conc, time },
        slotboom,
        species_stats,
        poisson_stats,
        poisson_residual,
    })
}
