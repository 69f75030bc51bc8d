//! Manufactured-solution accuracy harness.
//!
//! A [`ManufacturedCase`] carries an exact solution together with the
//! species sources and the (time-dependent) fixed charge that make it solve
//! the PNP system exactly. [`run_case`] integrates the scheme to a final
//! time and measures the error; [`convergence_table`] repeats this under
//! `Δt = h²` refinement and reports observed orders.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::diagnostics::{error_norms, fmt_f64, ErrorNorms};
use crate::grid::{norm, CellField, GridSpec, Norm};
use crate::mobility::MeanKind;
use crate::transport::{initial_state, step, FixedCharge, SchemeConfig, Species, State};
use crate::{Error, Result};

pub type SpaceTimeFn = Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>;

/// Exact solution, sources and fixed charge of a periodic test problem on
/// the unit cube.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub dim: usize,
    pub kappa: f64,
    pub species: Vec<Species>,
    pub conc: Vec<SpaceTimeFn>,
    pub psi: SpaceTimeFn,
    pub sources: Vec<SpaceTimeFn>,
    pub fixed_charge: SpaceTimeFn,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("dim", &self.dim)
            .field("kappa", &self.kappa)
            .field("species", &self.species)
            .finish_non_exhaustive()
    }
}

/// Binary monovalent 2-D case with
/// `c¹ = c² = e^{-t} cos(2πx) sin(2πy) + 2`, `ψ = e^{-t} cos(2πx) sin(2πy)`
/// and `κ = 1`.
pub fn build_paper_case() -> ManufacturedCase {
    let kappa = 1.0;
    let tau = 2.0 * PI;
    let phi = move |x: [f64; 3]| (tau * x[0]).cos() * (tau * x[1]).sin();
    // |∇φ|² = 4π² (sin²(2πx) sin²(2πy) + cos²(2πx) cos²(2πy))
    let grad_phi_sq = move |x: [f64; 3]| {
        let (sx, cx) = (tau * x[0]).sin_cos();
        let (sy, cy) = (tau * x[1]).sin_cos();
        tau * tau * (sx * sx * sy * sy + cx * cx * cy * cy)
    };
    let eight_pi_sq = 8.0 * PI * PI;

    let conc = move |x: [f64; 3], t: f64| (-t).exp() * phi(x) + 2.0;
    // f = ∂_t c - Δc - q (∇c·∇ψ + c Δψ)
    let source = move |q: f64| -> SpaceTimeFn {
        Arc::new(move |x, t| {
            let e = (-t).exp();
            let p = phi(x);
            let dt_c = -e * p;
            let lap_c = -eight_pi_sq * e * p;
            let grad_dot = e * e * grad_phi_sq(x);
            let c_lap_psi = (e * p + 2.0) * (-eight_pi_sq * e * p);
            dt_c - lap_c - q * (grad_dot + c_lap_psi)
        })
    };
    ManufacturedCase {
        dim: 2,
        kappa,
        species: vec![
            Species::new("c1", 1.0).expect("finite valence"),
            Species::new("c2", -1.0).expect("finite valence"),
        ],
        conc: vec![Arc::new(conc), Arc::new(conc)],
        psi: Arc::new(move |x, t| (-t).exp() * phi(x)),
        sources: vec![source(1.0), source(-1.0)],
        // ρ^f = -κΔψ - (c¹ - c²) = 8π² κ ψ
        fixed_charge: Arc::new(move |x, t| eight_pi_sq * kappa * (-t).exp() * phi(x)),
    }
}

/// Spatially and temporally constant neutral solution `c¹ = c² = value`,
/// `ψ = 0`, with vanishing sources.
pub fn uniform_case(dim: usize, value: f64) -> ManufacturedCase {
    let constant = move |_: [f64; 3], _: f64| value;
    let zero = |_: [f64; 3], _: f64| 0.0;
    ManufacturedCase {
        dim,
        kappa: 1.0,
        species: vec![
            Species::new("c1", 1.0).expect("finite valence"),
            Species::new("c2", -1.0).expect("finite valence"),
        ],
        conc: vec![Arc::new(constant), Arc::new(constant)],
        psi: Arc::new(zero),
        sources: vec![Arc::new(zero), Arc::new(zero)],
        fixed_charge: Arc::new(zero),
    }
}

impl ManufacturedCase {
    /// Exact fields sampled at cell centers.
    pub fn exact_state(&self, spec: &GridSpec, t: f64) -> State {
        State {
            psi: CellField::from_fn(*spec, |x| (self.psi)(x, t)),
            conc: self.conc.iter().map(|c| CellField::from_fn(*spec, |x| c(x, t))).collect(),
            time: t,
        }
    }

    pub fn sources_at(&self, spec: &GridSpec, t: f64) -> Vec<CellField> {
        self.sources.iter().map(|f| CellField::from_fn(*spec, |x| f(x, t))).collect()
    }

    pub fn scheme_config(&self, dt: f64, mean: MeanKind) -> Result<SchemeConfig> {
        Ok(SchemeConfig::new(self.kappa, dt, mean, self.species.clone())?
            .with_fixed_charge(FixedCharge::TimeDependent(self.fixed_charge.clone())))
    }
}

/// Number of steps to reach `t_end` with steps no longer than `dt`. A
/// ratio within `1e-9` relative of an integer is taken as that integer;
/// otherwise the step is shrunk to `t_end / ceil(t_end / dt)`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0 && dt > 0.0 && t_end.is_finite() && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need positive end time and step, got T = {t_end}, dt = {dt}"
        )));
    }
    let ratio = t_end / dt;
    let nearest = ratio.round();
    let steps = if (ratio - nearest).abs() <= 1e-9 * ratio { nearest } else { ratio.ceil() };
    Ok(steps.max(1.0) as usize)
}

/// Errors of one manufactured-solution run.
#[derive(Clone, Debug)]
pub struct CaseResult {
    pub n: usize,
    pub h: f64,
    /// Step actually used (see [`step_count`]).
    pub dt: f64,
    pub steps: usize,
    /// `‖c^l - c^l_e(T)‖_∞` per species.
    pub conc_linf: Vec<f64>,
    /// `‖ψ - ψ_e(T)‖_∞`.
    pub psi_linf: f64,
    /// All single-level norms at `T`.
    pub final_norms: ErrorNorms,
    /// `(Δt Σ_k Σ_l ‖e_J^{l,k}‖²)^{1/2}` over all steps.
    pub flux_time_l2: f64,
    /// `Σ_l ‖e^l‖_2 + (Δt Σ_k Σ_l ‖∇_h e^{l,k}‖²)^{1/2} + ‖e_ψ‖_{H²}` at `T`.
    pub combined_error: f64,
}

/// Runs the case from its exact initial concentrations to `t_end`. The
/// initial potential comes from the discrete Poisson problem; sources and
/// fixed charge are evaluated at the new time level of every step.
pub fn run_case(
    case: &ManufacturedCase,
    n: usize,
    dt: f64,
    t_end: f64,
    mean: MeanKind,
) -> Result<CaseResult> {
    let spec = GridSpec::unit(case.dim, n)?;
    let steps = step_count(t_end, dt)?;
    let dt = t_end / steps as f64;
    let cfg = case.scheme_config(dt, mean)?;
    let init = case.exact_state(&spec, 0.0);
    let mut state = initial_state(init.conc, &cfg, 0.0)?;

    let mut flux_acc = 0.0;
    let mut grad_acc = 0.0;
    for k in 1..=steps {
        let t = k as f64 * dt;
        let sources = case.sources_at(&spec, t);
        state = step(&state, &cfg, Some(&sources))?.state;
        state.time = t;
        let exact = case.exact_state(&spec, t);
        let e = error_norms(&state, &exact, &case.species)?;
        flux_acc += dt * e.flux_l2.iter().map(|v| v * v).sum::<f64>();
        grad_acc += dt * e.conc_grad_l2.iter().map(|v| v * v).sum::<f64>();
    }

    let exact = case.exact_state(&spec, t_end);
    let final_norms = error_norms(&state, &exact, &case.species)?;
    let conc_linf = final_norms.conc_linf.clone();
    let psi_err = exact.psi.zip_map(&state.psi, |a, b| a - b)?;
    Ok(CaseResult {
        n,
        h: spec.h(),
        dt,
        steps,
        conc_linf,
        psi_linf: norm(&psi_err, Norm::Linf)?,
        flux_time_l2: flux_acc.sqrt(),
        combined_error: final_norms.conc_l2.iter().sum::<f64>() + grad_acc.sqrt() + final_norms.psi_h2,
        final_norms,
    })
}

/// Errors at or below this level are treated as rounding noise and give no
/// meaningful order.
pub const ROUNDING_FLOOR: f64 = 1e-12;

/// `ln(e_prev/e_next) / ln(h_prev/h_next)`, or NaN when either error is at
/// rounding level.
pub fn observed_order(e_prev: f64, e_next: f64, h_prev: f64, h_next: f64) -> f64 {
    if e_prev <= ROUNDING_FLOOR || e_next <= ROUNDING_FLOOR {
        return f64::NAN;
    }
    (e_prev / e_next).ln() / (h_prev / h_next).ln()
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub result: CaseResult,
    /// Order of each reported error against the previous row: species
    /// concentrations first, then the potential. `None` on the first row.
    pub orders: Vec<Option<f64>>,
    /// Order of [`CaseResult::flux_time_l2`].
    pub flux_order: Option<f64>,
}

impl ConvergenceRow {
    /// Concentration errors followed by the potential error.
    pub fn errors(&self) -> Vec<f64> {
        let mut v = self.result.conc_linf.clone();
        v.push(self.result.psi_linf);
        v
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub mean: MeanKind,
    pub species: Vec<Species>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["mean".to_string(), "h".into(), "dt".into()];
        for l in 1..=self.species.len() {
            cols.push(format!("err_c{l}"));
            cols.push(format!("ord_c{l}"));
        }
        cols.push("err_psi".into());
        cols.push("ord_psi".into());
        cols.join(",")
    }

    /// Header plus one line per row. The first row has empty order cells;
    /// orders that could not be measured are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{},{}", self.mean, fmt_f64(row.result.h), fmt_f64(row.result.dt));
            for (e, o) in row.errors().iter().zip(&row.orders) {
                let ord = match o {
                    None => String::new(),
                    Some(v) if v.is_nan() => "nan".into(),
                    Some(v) => fmt_f64(*v),
                };
                let _ = write!(out, ",{},{}", fmt_f64(*e), ord);
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the case for every `n` with `Δt = h²` up to `t_end` and reports
/// errors with observed orders between consecutive rows.
pub fn convergence_table(
    case: &ManufacturedCase,
    n_list: &[usize],
    mean: MeanKind,
    t_end: f64,
) -> Result<ConvergenceTable> {
    if n_list.len() < 2 {
        return Err(Error::InvalidParameter("a convergence table needs at least two grids".into()));
    }
    check_increasing(n_list)?;
    let results = n_list
        .iter()
        .map(|&n| {
            let h = 1.0 / n as f64;
            run_case(case, n, h * h, t_end, mean)
        })
        .collect::<Result<Vec<_>>>()?;
    table_from_results(case, mean, results)
}

fn check_increasing(n_list: &[usize]) -> Result<()> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid sizes must be strictly increasing".into()));
    }
    Ok(())
}

/// Assembles a table from runs ordered by increasing `n`.
pub fn table_from_results(
    case: &ManufacturedCase,
    mean: MeanKind,
    results: Vec<CaseResult>,
) -> Result<ConvergenceTable> {
    check_increasing(&results.iter().map(|r| r.n).collect::<Vec<_>>())?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for result in results {
        let (orders, flux_order) = match rows.last() {
            None => (vec![None; result.conc_linf.len() + 1], None),
            Some(prev) => {
                let mut cur = result.conc_linf.clone();
                cur.push(result.psi_linf);
                let orders = prev
                    .errors()
                    .iter()
                    .zip(&cur)
                    .map(|(a, b)| Some(observed_order(*a, *b, prev.result.h, result.h)))
                    .collect();
                let fo = observed_order(
                    prev.result.flux_time_l2,
                    result.flux_time_l2,
                    prev.result.h,
                    result.h,
                );
                (orders, Some(fo))
            }
        };
        rows.push(ConvergenceRow { result, orders, flux_order });
    }
    Ok(ConvergenceTable { mean, species: case.species.clone(), rows })
}
