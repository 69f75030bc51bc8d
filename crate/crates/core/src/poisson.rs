//! Zero-mean periodic Poisson problem `-κ Δ_h ψ = rhs`.

use crate::grid::{self, laplacian, norm, CellField, Norm};
use crate::linsolve::{pcg, CgOptions, SolveStats};
use crate::{Error, Result};

/// `-κ Δ_h ψ = rhs` on a periodic grid.
#[derive(Clone, Debug)]
pub struct PoissonProblem {
    kappa: f64,
    rhs: CellField,
}

impl PoissonProblem {
    pub fn new(kappa: f64, rhs: CellField) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { kappa, rhs })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rhs(&self) -> &CellField {
        &self.rhs
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; `None` means `10 n^dim`.
    pub max_iter: Option<usize>,
    /// Largest tolerated `|mean(rhs)| / ‖rhs‖_∞` before the problem is
    /// rejected as non-neutral. Smaller offsets are projected out.
    pub compat_tol: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            compat_tol: 1e-10,
        }
    }
}

/// Checks neutrality and returns the right-hand side with its mean removed.
fn compatible_rhs(p: &PoissonProblem, compat_tol: f64) -> Result<CellField> {
    let m = grid::mean(&p.rhs);
    let scale = norm(&p.rhs, Norm::Linf)?;
    let limit = compat_tol * scale;
    if m.abs() > limit {
        return Err(Error::IncompatibleRhs { mean: m, limit });
    }
    Ok(p.rhs.map(|v| v - m))
}

fn remove_mean(f: &mut CellField) {
    for _ in 0..2 {
        let m = grid::mean(f);
        f.values_mut().iter_mut().for_each(|v| *v -= m);
    }
}

/// Solves the problem from a zero initial guess.
pub fn solve_poisson(p: &PoissonProblem, opts: &PoissonOptions) -> Result<CellField> {
    solve_poisson_from(p, opts, None).map(|(psi, _)| psi)
}

/// Solves the problem starting from `guess` (for example the potential of
/// the previous time level). The returned potential has zero mean.
///
/// The rhs is first checked for neutrality against `compat_tol`; the
/// residual target then applies to the mean-free rhs.
pub fn solve_poisson_from(
    p: &PoissonProblem,
    opts: &PoissonOptions,
    guess: Option<&CellField>,
) -> Result<(CellField, SolveStats)> {
    let spec = *p.rhs.spec();
    let rhs = compatible_rhs(p, opts.compat_tol)?;
    let mut psi = match guess {
        Some(g) => {
            g.check_same_grid(&spec)?;
            g.clone()
        }
        None => CellField::zeros(spec),
    };
    let h = spec.h();
    let kappa = p.kappa;
    let diag = 2.0 * spec.dim() as f64 * kappa / (h * h);
    let inv_diag = vec![1.0 / diag; spec.len()];
    let apply = |v: &[f64], out: &mut [f64]| neg_laplacian_into(&spec, kappa, v, out);
    let opts_cg = CgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter.unwrap_or(10 * spec.len()),
        project_mean: true,
    };
    let stats = pcg(apply, Some(&inv_diag), rhs.values(), psi.values_mut(), &opts_cg)?;
    remove_mean(&mut psi);
    Ok((psi, stats))
}

/// `out = -κ Δ_h v`, same stencil and order as [`grid::laplacian`].
fn neg_laplacian_into(spec: &grid::GridSpec, kappa: f64, v: &[f64], out: &mut [f64]) {
    let h = spec.h();
    for (nb, o) in spec.neighbors().zip(out.iter_mut()) {
        let vi = v[nb.idx];
        let mut acc = 0.0;
        for axis in 0..spec.dim() {
            let up = v[nb.up[axis]];
            let dn = v[nb.down[axis]];
            acc += ((up - vi) / h - (vi - dn) / h) / h;
        }
        *o = -kappa * acc;
    }
}

/// `‖κ Δ_h ψ + rhs‖_2`.
pub fn poisson_residual(psi: &CellField, p: &PoissonProblem) -> Result<f64> {
    psi.check_same_grid(p.rhs.spec())?;
    let lap = laplacian(psi);
    let r = lap.zip_map(&p.rhs, |l, b| p.kappa * l + b)?;
    norm(&r, Norm::L2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GridSpec;
    use std::f64::consts::PI;

    fn eigen_pair(n: usize, kappa: f64) -> (CellField, CellField) {
        let g = GridSpec::unit(1, n).unwrap();
        let h = g.h();
        let lam = (4.0 / (h * h)) * (PI * h).sin().powi(2);
        let psi = CellField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        (psi.scaled(kappa * lam), psi)
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = GridSpec::unit(2, 6).unwrap();
        let p = PoissonProblem::new(1.0, CellField::zeros(g)).unwrap();
        let psi = solve_poisson(&p, &PoissonOptions::default()).unwrap();
        assert!(psi.values().iter().all(|&v| v == 0.0));
        assert_eq!(poisson_residual(&psi, &p).unwrap(), 0.0);
    }

    #[test]
    fn recovers_cosine_eigenmode() {
        let kappa = 0.7;
        let (rhs, exact) = eigen_pair(32, kappa);
        let p = PoissonProblem::new(kappa, rhs).unwrap();
        let opts = PoissonOptions::default();
        let psi = solve_poisson(&p, &opts).unwrap();
        for (a, b) in psi.values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        let res = poisson_residual(&psi, &p).unwrap();
        assert!(res <= opts.tol * norm(p.rhs(), Norm::L2).unwrap());
        assert!(grid::mean(&psi).abs() <= 1e-14 * norm(&psi, Norm::Linf).unwrap());
        // exact pair has tiny residual too
        assert!(poisson_residual(&exact, &p).unwrap() < 1e-10 * norm(p.rhs(), Norm::L2).unwrap());
    }

    #[test]
    fn residual_ignores_constant_shift() {
        let (rhs, exact) = eigen_pair(16, 1.0);
        let p = PoissonProblem::new(1.0, rhs).unwrap();
        let r0 = poisson_residual(&exact, &p).unwrap();
        let r1 = poisson_residual(&exact.map(|v| v + 3.0), &p).unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn non_neutral_rhs_rejected() {
        let g = GridSpec::unit(2, 4).unwrap();
        let rhs = CellField::from_fn(g, |x| 1.0 + (2.0 * PI * x[0]).cos());
        let p = PoissonProblem::new(1.0, rhs).unwrap();
        match solve_poisson(&p, &PoissonOptions::default()) {
            Err(Error::IncompatibleRhs { mean, .. }) => assert!((mean - 1.0).abs() < 1e-12),
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn tiny_mean_offset_is_projected() {
        let (rhs, exact) = eigen_pair(16, 1.0);
        let p = PoissonProblem::new(1.0, rhs.map(|v| v + 1e-13)).unwrap();
        let psi = solve_poisson(&p, &PoissonOptions::default()).unwrap();
        for (a, b) in psi.values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let g = GridSpec::unit(2, 16).unwrap();
        let rhs = CellField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() + (6.0 * PI * x[1]).sin());
        let p = PoissonProblem::new(1.0, rhs).unwrap();
        let opts = PoissonOptions { max_iter: Some(1), tol: 1e-12, ..Default::default() };
        assert!(matches!(solve_poisson(&p, &opts), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn bad_kappa_rejected() {
        let g = GridSpec::unit(1, 4).unwrap();
        assert!(PoissonProblem::new(0.0, CellField::zeros(g)).is_err());
        assert!(PoissonProblem::new(-1.0, CellField::zeros(g)).is_err());
    }

    #[test]
    fn linearity_and_mirror_symmetry() {
        let g = GridSpec::unit(2, 12).unwrap();
        let base = CellField::from_fn(g, |x| {
            (2.0 * PI * x[0]).sin() + 0.3 * (4.0 * PI * x[1]).cos() * (2.0 * PI * x[0]).cos()
                + (-30.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2))).exp()
        });
        let m = grid::mean(&base);
        let rhs = base.map(|v| v - m);
        let opts = PoissonOptions { tol: 1e-12, ..Default::default() };
        let psi = solve_poisson(&PoissonProblem::new(2.0, rhs.clone()).unwrap(), &opts).unwrap();
        let psi3 = solve_poisson(&PoissonProblem::new(2.0, rhs.scaled(-3.0)).unwrap(), &opts).unwrap();
        let scale = norm(&psi, Norm::Linf).unwrap();
        for (a, b) in psi.values().iter().zip(psi3.values()) {
            assert!((-3.0 * a - b).abs() < 1e-9 * scale);
        }
        // reflection x -> -x maps cell i to n-1-i
        let n = g.n() as isize;
        let mirrored = CellField::from_values(
            g,
            (0..g.len())
                .map(|idx| {
                    let c = g.coords(idx);
                    rhs.at(&[n - 1 - c[0] as isize, c[1] as isize])
                })
                .collect(),
        )
        .unwrap();
        let psi_m = solve_poisson(&PoissonProblem::new(2.0, mirrored).unwrap(), &opts).unwrap();
        for idx in 0..g.len() {
            let c = g.coords(idx);
            let a = psi_m.values()[idx];
            let b = psi.at(&[n - 1 - c[0] as isize, c[1] as isize]);
            assert!((a - b).abs() < 1e-9 * scale);
        }
    }
}
