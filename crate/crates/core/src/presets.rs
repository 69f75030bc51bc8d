//! Ready-made problem set-ups.

use crate::grid::{CellField, GridSpec};
use crate::mobility::MeanKind;
use crate::transport::{initial_state, FixedCharge, SchemeConfig, Species, State};
use crate::Result;

/// `exp(-100 |x - x0|²)`, the building block of [`gaussian_quadrupole`].
fn bump(x: [f64; 3], cx: f64, cy: f64) -> f64 {
    (-100.0 * ((x[0] - cx).powi(2) + (x[1] - cy).powi(2))).exp()
}

/// Two negative and two positive Gaussian charges in the four quadrants of
/// the unit square.
pub fn gaussian_quadrupole(x: [f64; 3]) -> f64 {
    -bump(x, 0.25, 0.25) + bump(x, 0.25, 0.75) + bump(x, 0.75, 0.25) - bump(x, 0.75, 0.75)
}

/// Monovalent cation and anion.
pub fn monovalent_pair() -> Vec<Species> {
    vec![
        Species::new("cation", 1.0).expect("finite valence"),
        Species::new("anion", -1.0).expect("finite valence"),
    ]
}

/// The four-charge relaxation problem on the unit square: `κ = 10⁻³`,
/// both species start at `0.1`, fixed charge [`gaussian_quadrupole`].
/// `dt = None` uses `h/10`.
#[derive(Clone, Copy, Debug)]
pub struct QuadrupoleSetup {
    pub n: usize,
    pub kappa: f64,
    pub dt: Option<f64>,
    pub initial_conc: f64,
    pub mean: MeanKind,
}

impl QuadrupoleSetup {
    pub fn new(n: usize, mean: MeanKind) -> Self {
        Self { n, kappa: 1e-3, dt: None, initial_conc: 0.1, mean }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::unit(2, self.n)
    }

    pub fn config(&self) -> Result<SchemeConfig> {
        let spec = self.grid()?;
        let dt = self.dt.unwrap_or(spec.h() / 10.0);
        let rho = CellField::from_fn(spec, gaussian_quadrupole);
        Ok(SchemeConfig::new(self.kappa, dt, self.mean, monovalent_pair())?
            .with_fixed_charge(FixedCharge::Static(rho)))
    }

    /// Configuration and initial state (with its Poisson potential).
    pub fn build(&self) -> Result<(SchemeConfig, State)> {
        let spec = self.grid()?;
        let cfg = self.config()?;
        let conc = vec![CellField::constant(spec, self.initial_conc); 2];
        let state = initial_state(conc, &cfg, 0.0)?;
        Ok((cfg, state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::mean;

    #[test]
    fn quadrupole_signs_and_neutrality() {
        assert!(gaussian_quadrupole([0.25, 0.25, 0.0]) < -0.99);
        assert!(gaussian_quadrupole([0.25, 0.75, 0.0]) > 0.99);
        assert!(gaussian_quadrupole([0.75, 0.25, 0.0]) > 0.99);
        assert!(gaussian_quadrupole([0.75, 0.75, 0.0]) < -0.99);
        let g = GridSpec::unit(2, 40).unwrap();
        let rho = CellField::from_fn(g, gaussian_quadrupole);
        assert!(mean(&rho).abs() < 1e-15);
    }

    #[test]
    fn setup_defaults() {
        let s = QuadrupoleSetup::new(40, MeanKind::Entropic);
        let (cfg, state) = s.build().unwrap();
        assert!((cfg.dt - 1.0 / 400.0).abs() < 1e-18);
        assert_eq!(cfg.kappa, 1e-3);
        assert!(state.conc.iter().all(|c| c.values().iter().all(|&v| v == 0.1)));
        assert!(mean(&state.psi).abs() < 1e-14);
    }
}
