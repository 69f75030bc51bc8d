//! Conserved and dissipated quantities of the scheme, ionic fluxes and
//! error norms against a reference solution.

use std::fmt::Write as _;

use crate::grid::{self, avg_forward, diff_forward, face_inner, gradient, norm, CellField, FaceField, Norm};
use crate::mobility::{face_mobility, MeanKind, SlotboomExponent};
use crate::transport::{SchemeConfig, Species, State, StepOutcome};
use crate::{Error, Result};

/// How the fixed charge enters the electrostatic part of the free energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EnergyCounting {
    /// `Σ_l ½ (q^l c^l + ρ^f) ψ`: the fixed charge sits inside the species
    /// sum and is counted once per species.
    #[default]
    PerSpecies,
    /// `½ (Σ_l q^l c^l + ρ^f) ψ`: the fixed charge is counted once.
    Once,
}

/// `h^dim Σ c`.
pub fn total_mass(c: &CellField) -> f64 {
    c.spec().cell_volume() * grid::sum(c.values().iter().copied())
}

/// Returns the first non-positive cell of any species as a positivity
/// violation.
pub fn check_positivity(conc: &[CellField], species: &[Species]) -> Result<()> {
    for (c, sp) in conc.iter().zip(species) {
        let (index, value) = c.argmin();
        if !(value > 0.0) {
            return Err(Error::PositivityViolation { species: sp.name.clone(), index, value });
        }
    }
    Ok(())
}

/// Discrete free energy `Σ_l Σ h^dim [c log c + ½ (q c + ρ^f) ψ]`.
pub fn free_energy(
    state: &State,
    species: &[Species],
    fixed_charge: &CellField,
    counting: EnergyCounting,
) -> Result<f64> {
    let spec = *state.psi.spec();
    fixed_charge.check_same_grid(&spec)?;
    let psi = state.psi.values();
    let rho = fixed_charge.values();
    let fixed_in_species = counting == EnergyCounting::PerSpecies;
    let mut terms = Vec::with_capacity(spec.len() * (species.len() + 1));
    for (c, sp) in state.conc.iter().zip(species) {
        c.check_same_grid(&spec)?;
        for (i, &ci) in c.values().iter().enumerate() {
            if !(ci > 0.0) {
                return Err(Error::Domain(format!(
                    "free energy needs positive concentrations; `{}` has {ci:e} at cell {i}",
                    sp.name
                )));
            }
            let charge = if fixed_in_species { sp.valence * ci + rho[i] } else { sp.valence * ci };
            terms.push(ci * ci.ln() + 0.5 * charge * psi[i]);
        }
    }
    if !fixed_in_species {
        terms.extend(rho.iter().zip(psi).map(|(r, p)| 0.5 * r * p));
    }
    Ok(spec.cell_volume() * grid::sum(terms))
}

/// Dissipation rate `I^n`: the sum over species, axes and faces of
/// `h^dim M D(g) D(log g)` with `g = c^{n+1} e^{q ψ^n}` and `M` the face
/// mobility of the given mean at the old potential.
pub fn dissipation_rate(
    c_next: &[CellField],
    psi_old: &CellField,
    species: &[Species],
    mean: MeanKind,
) -> Result<f64> {
    let spec = *psi_old.spec();
    let mut terms = Vec::new();
    for (c, sp) in c_next.iter().zip(species) {
        c.check_same_grid(&spec)?;
        if let Some(i) = c.values().iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Domain(format!(
                "dissipation rate needs positive concentrations; `{}` fails at cell {i}",
                sp.name
            )));
        }
        let exponent = SlotboomExponent::from_potential(psi_old, sp.valence)?;
        let mobility = face_mobility(&exponent, mean);
        let s = exponent.field().values();
        let (g, log_g): (Vec<f64>, Vec<f64>) = c
            .values()
            .iter()
            .zip(s)
            .map(|(&ci, &si)| {
                let g = ci * si.exp();
                if g.is_finite() && g > 0.0 {
                    (g, g.ln())
                } else {
                    (g, ci.ln() + si)
                }
            })
            .unzip();
        let g = CellField::from_values(spec, g)?;
        let log_g = CellField::from_values(spec, log_g)?;
        for axis in 0..spec.dim() {
            let dg = diff_forward(&g, axis)?;
            let dlog = diff_forward(&log_g, axis)?;
            let m = &mobility.components()[axis];
            terms.extend((0..spec.len()).map(|i| m[i] * dg[i] * dlog[i]));
        }
    }
    Ok(spec.cell_volume() * grid::sum(terms))
}

/// Sufficient step bound `τ* = (κ/C₁) exp(-h max|q| ‖∇_h ψ^n‖_∞)` with
/// `C₁ = Σ q² · max_l ‖c^{l,n+1}‖_∞`.
pub fn tau_star(c_next: &[CellField], psi_old: &CellField, species: &[Species], kappa: f64) -> f64 {
    let q_sq: f64 = species.iter().map(|s| s.valence * s.valence).sum();
    let q_max = species.iter().fold(0.0f64, |m, s| m.max(s.valence.abs()));
    let c_max = c_next
        .iter()
        .fold(0.0f64, |m, c| m.max(norm(c, Norm::Linf).unwrap_or(f64::INFINITY)));
    let grad_max = gradient(psi_old).max_abs();
    let c1 = q_sq * c_max;
    kappa / c1 * (-psi_old.spec().h() * q_max * grad_max).exp()
}

/// Numerical flux `J = D c + q (A c)(D ψ)` on every face.
pub fn flux(c: &CellField, psi: &CellField, valence: f64) -> Result<FaceField> {
    c.check_same_grid(psi.spec())?;
    if valence == 0.0 {
        return Ok(gradient(c));
    }
    let spec = *c.spec();
    let comps = (0..spec.dim())
        .map(|axis| {
            let dc = diff_forward(c, axis)?;
            let ac = avg_forward(c, axis)?;
            let dpsi = diff_forward(psi, axis)?;
            Ok((0..spec.len()).map(|i| dc[i] + valence * ac[i] * dpsi[i]).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    FaceField::from_components(spec, comps)
}

/// Single-time-level error norms between a numerical and a reference state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub conc_l2: Vec<f64>,
    pub conc_linf: Vec<f64>,
    /// `‖∇_h e^l‖_2`
    pub conc_grad_l2: Vec<f64>,
    pub psi_l2: f64,
    pub psi_linf: f64,
    pub psi_h2: f64,
    /// `‖J^l_ref - J^l‖_2` with both fluxes from [`flux`].
    pub flux_l2: Vec<f64>,
}

pub fn error_norms(numerical: &State, reference: &State, species: &[Species]) -> Result<ErrorNorms> {
    numerical.psi.check_same_grid(reference.psi.spec())?;
    if numerical.conc.len() != reference.conc.len() || numerical.conc.len() != species.len() {
        return Err(Error::InvalidParameter("states and species list differ in length".into()));
    }
    let e_psi = reference.psi.zip_map(&numerical.psi, |a, b| a - b)?;
    let mut out = ErrorNorms {
        psi_l2: norm(&e_psi, Norm::L2)?,
        psi_linf: norm(&e_psi, Norm::Linf)?,
        psi_h2: norm(&e_psi, Norm::H2)?,
        ..Default::default()
    };
    for ((cn, cr), sp) in numerical.conc.iter().zip(&reference.conc).zip(species) {
        let e = cr.zip_map(cn, |a, b| a - b)?;
        out.conc_l2.push(norm(&e, Norm::L2)?);
        out.conc_linf.push(norm(&e, Norm::Linf)?);
        out.conc_grad_l2.push(norm(&e, Norm::GradL2)?);
        let jn = flux(cn, &numerical.psi, sp.valence)?;
        let jr = flux(cr, &reference.psi, sp.valence)?;
        let ej = jr.zip_map(&jn, |a, b| a - b)?;
        out.flux_l2.push(face_inner(&ej, &ej)?.sqrt());
    }
    Ok(out)
}

/// One row of the time-series report.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub mass: Vec<f64>,
    pub min_conc: Vec<f64>,
    pub energy: f64,
    /// `I^n` of the step that produced this state.
    pub dissipation: Option<f64>,
    pub tau_star: Option<f64>,
    pub poisson_residual: f64,
    /// Linear iterations of the step (all species plus Poisson).
    pub iterations: usize,
}

impl StepReport {
    /// Report for a state that was not produced by a step.
    pub fn initial(state: &State, cfg: &SchemeConfig, counting: EnergyCounting) -> Result<Self> {
        let rho = cfg.fixed_charge.at(state.spec(), state.time)?;
        let problem = crate::poisson::PoissonProblem::new(
            cfg.kappa,
            crate::transport::charge_density(&state.conc, cfg, state.time)?,
        )?;
        Ok(Self {
            step: 0,
            time: state.time,
            mass: state.conc.iter().map(total_mass).collect(),
            min_conc: state.conc.iter().map(CellField::min).collect(),
            energy: free_energy(state, &cfg.species, &rho, counting)?,
            dissipation: None,
            tau_star: None,
            poisson_residual: crate::poisson::poisson_residual(&state.psi, &problem)?,
            iterations: 0,
        })
    }

    /// Report for `outcome`, which advanced `previous` by one step.
    pub fn after_step(
        step: usize,
        previous: &State,
        outcome: &StepOutcome,
        cfg: &SchemeConfig,
        counting: EnergyCounting,
    ) -> Result<Self> {
        let state = &outcome.state;
        let rho = cfg.fixed_charge.at(state.spec(), state.time)?;
        Ok(Self {
            step,
            time: state.time,
            mass: state.conc.iter().map(total_mass).collect(),
            min_conc: state.conc.iter().map(CellField::min).collect(),
            energy: free_energy(state, &cfg.species, &rho, counting)?,
            dissipation: Some(dissipation_rate(&state.conc, &previous.psi, &cfg.species, cfg.mean)?),
            tau_star: Some(tau_star(&state.conc, &previous.psi, &cfg.species, cfg.kappa)),
            poisson_residual: outcome.poisson_residual,
            iterations: outcome.species_stats.iter().map(|s| s.iterations).sum::<usize>()
                + outcome.poisson_stats.iterations,
        })
    }

    pub fn csv_header(species: &[Species]) -> String {
        let mut cols = vec!["step".to_string(), "t".to_string()];
        cols.extend(species.iter().map(|s| format!("mass_{}", s.name)));
        cols.extend(species.iter().map(|s| format!("min_{}", s.name)));
        cols.extend(
            ["energy", "dissipation", "tau_star", "poisson_residual", "iterations"].map(String::from),
        );
        cols.join(",")
    }

    /// Floats are written with 17 significant digits; absent values are empty.
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        let _ = write!(row, "{},{}", self.step, fmt_f64(self.time));
        for v in self.mass.iter().chain(&self.min_conc) {
            let _ = write!(row, ",{}", fmt_f64(*v));
        }
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let _ = write!(
            row,
            ",{},{},{},{},{}",
            fmt_f64(self.energy),
            opt(self.dissipation),
            opt(self.tau_star),
            fmt_f64(self.poisson_residual),
            self.iterations
        );
        row
    }
}

/// Round-trip exact scientific notation (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{initial_state, step};
    use crate::GridSpec;
    use std::f64::consts::{E, PI};

    fn pm() -> Vec<Species> {
        vec![Species::new("p", 1.0).unwrap(), Species::new("m", -1.0).unwrap()]
    }

    #[test]
    fn mass_examples() {
        let g = GridSpec::unit(2, 10).unwrap();
        assert!((total_mass(&CellField::constant(g, 0.1)) - 0.1).abs() < 1e-16);
        let c = CellField::from_fn(g, |x| 1.0 + x[0] * x[1]);
        let naive: f64 = c.values().iter().rev().map(|v| v * g.cell_volume()).sum();
        assert!((total_mass(&c) - naive).abs() < 1e-14);
    }

    #[test]
    fn free_energy_examples() {
        let g = GridSpec::new(2, 4, 0.0, 2.0).unwrap();
        let z = CellField::zeros(g);
        let state = State { psi: z.clone(), conc: vec![CellField::constant(g, 1.0); 2], time: 0.0 };
        assert_eq!(free_energy(&state, &pm(), &z, EnergyCounting::PerSpecies).unwrap(), 0.0);
        let one = vec![Species::new("s", 1.0).unwrap()];
        let state = State { psi: z.clone(), conc: vec![CellField::constant(g, E)], time: 0.0 };
        let f = free_energy(&state, &one, &z, EnergyCounting::PerSpecies).unwrap();
        assert!((f - 4.0 * E).abs() < 1e-13);
        let bad = State { psi: z.clone(), conc: vec![CellField::constant(g, 0.0)], time: 0.0 };
        assert!(free_energy(&bad, &one, &z, EnergyCounting::Once).is_err());
    }

    #[test]
    fn energy_counting_variants_differ_by_fixed_charge_term() {
        let g = GridSpec::unit(2, 6).unwrap();
        let psi = CellField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let rho = CellField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * 0.5);
        let state = State {
            psi: psi.clone(),
            conc: vec![CellField::constant(g, 0.3), CellField::constant(g, 0.4)],
            time: 0.0,
        };
        let a = free_energy(&state, &pm(), &rho, EnergyCounting::PerSpecies).unwrap();
        let b = free_energy(&state, &pm(), &rho, EnergyCounting::Once).unwrap();
        let extra = 0.5 * grid::inner(&rho, &psi).unwrap();
        assert!((a - b - extra).abs() < 1e-14);
        // relabeling species leaves the energy unchanged
        let swapped = State { psi, conc: vec![state.conc[1].clone(), state.conc[0].clone()], time: 0.0 };
        let sp_swapped = vec![pm()[1].clone(), pm()[0].clone()];
        let c = free_energy(&swapped, &sp_swapped, &rho, EnergyCounting::PerSpecies).unwrap();
        assert!((a - c).abs() < 1e-15);
    }

    #[test]
    fn dissipation_examples() {
        let g = GridSpec::unit(2, 6).unwrap();
        let z = CellField::zeros(g);
        let uni = vec![CellField::constant(g, 0.2); 2];
        for kind in MeanKind::ALL {
            assert_eq!(dissipation_rate(&uni, &z, &pm(), kind).unwrap(), 0.0);
        }
        let psi = CellField::from_fn(g, |x| (2.0 * PI * x[1]).cos());
        let c = vec![
            CellField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin()),
            CellField::from_fn(g, |x| 0.5 + 0.1 * x[1]),
        ];
        for kind in MeanKind::ALL {
            assert!(dissipation_rate(&c, &psi, &pm(), kind).unwrap() > 0.0);
        }
        assert!(dissipation_rate(&[z.clone(), z.clone()], &z, &pm(), MeanKind::Harmonic).is_err());
    }

    #[test]
    fn tau_star_examples() {
        let g = GridSpec::unit(2, 8).unwrap();
        let c = vec![CellField::constant(g, 2.0), CellField::constant(g, 1.0)];
        let z = CellField::zeros(g);
        assert!((tau_star(&c, &z, &pm(), 1.0) - 0.25).abs() < 1e-16);
        assert_eq!(tau_star(&c, &z, &pm(), 3.0), 3.0 / 4.0);
        let mut last = f64::INFINITY;
        for amp in [0.1, 0.5, 1.0, 2.0] {
            let psi = CellField::from_fn(g, |x| amp * (2.0 * PI * x[0]).sin());
            let t = tau_star(&c, &psi, &pm(), 1.0);
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn flux_examples() {
        let g = GridSpec::unit(2, 8).unwrap();
        let c = CellField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let psi = CellField::from_fn(g, |x| (2.0 * PI * x[1]).sin());
        assert_eq!(flux(&c, &CellField::zeros(g), 1.0).unwrap(), gradient(&c));
        assert_eq!(flux(&c, &psi, 0.0).unwrap(), gradient(&c));
        let k = CellField::constant(g, 0.7);
        let j = flux(&k, &psi, -2.0).unwrap();
        let expect = gradient(&psi).map(|v| -2.0 * 0.7 * v);
        for (a, b) in j.components().iter().flatten().zip(expect.components().iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn boltzmann_flux_vanishes_at_second_order() {
        // c = e^{-qψ} with smooth ψ: continuum flux is zero; discrete flux is O(h^2)
        let q = 1.0;
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = GridSpec::unit(2, n).unwrap();
                let psi_fn = |x: [f64; 3]| 0.8 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
                let psi = CellField::from_fn(g, psi_fn);
                let c = CellField::from_fn(g, |x| (-q * psi_fn(x)).exp());
                let j = flux(&c, &psi, q).unwrap();
                face_inner(&j, &j).unwrap().sqrt()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.1, "order {order}");
        }
    }

    #[test]
    fn error_norm_examples() {
        let g = GridSpec::new(2, 8, 0.0, 2.0).unwrap();
        let psi = CellField::from_fn(g, |x| (PI * x[0]).sin());
        let conc = vec![CellField::from_fn(g, |x| 1.0 + 0.1 * x[1]), CellField::constant(g, 1.0)];
        let a = State { psi: psi.clone(), conc: conc.clone(), time: 0.0 };
        let e = error_norms(&a, &a, &pm()).unwrap();
        assert!(e.conc_l2.iter().chain(&e.flux_l2).all(|&v| v == 0.0));
        assert_eq!((e.psi_l2, e.psi_h2), (0.0, 0.0));
        let shifted = State { psi: psi.map(|v| v + 0.25), conc, time: 0.0 };
        let e = error_norms(&a, &shifted, &pm()).unwrap();
        assert!((e.psi_l2 - 0.25 * 2.0).abs() < 1e-14);
        assert!(e.conc_l2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn report_row_shape() {
        let g = GridSpec::unit(2, 6).unwrap();
        let cfg = SchemeConfig::new(1.0, 0.01, MeanKind::Harmonic, pm()).unwrap();
        let s0 = initial_state(vec![CellField::constant(g, 0.1); 2], &cfg, 0.0).unwrap();
        let out = step(&s0, &cfg, None).unwrap();
        let r = StepReport::after_step(1, &s0, &out, &cfg, EnergyCounting::PerSpecies).unwrap();
        let header = StepReport::csv_header(&cfg.species);
        assert_eq!(header, "step,t,mass_p,mass_m,min_p,min_m,energy,dissipation,tau_star,poisson_residual,iterations");
        assert_eq!(r.csv_row().split(',').count(), header.split(',').count());
        let r0 = StepReport::initial(&s0, &cfg, EnergyCounting::PerSpecies).unwrap();
        assert!(r0.csv_row().contains(",,"));
        let v: f64 = fmt_f64(0.1 + 0.2).parse().unwrap();
        assert_eq!(v, 0.1 + 0.2);
    }

    #[test]
    fn positivity_check_locates_cell() {
        let g = GridSpec::unit(1, 5).unwrap();
        let mut c = CellField::constant(g, 1.0);
        c.values_mut()[3] = -0.5;
        match check_positivity(&[CellField::constant(g, 1.0), c], &pm()) {
            Err(Error::PositivityViolation { species, index, .. }) => {
                assert_eq!(species, "m");
                assert_eq!(index, 3);
            }
            other => panic!("{other:?}"),
        }
    }
}
