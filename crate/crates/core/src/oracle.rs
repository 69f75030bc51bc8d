//! Dense reference implementations for small grids.
//!
//! [`dense_transport_matrix`] materializes the matrix-free operator column
//! by column. [`stencil_transport_matrix`] is assembled entry by entry from
//! the stencil with its own textbook evaluation of the face means, so it
//! shares no code path with the operator it certifies.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{mean, norm, CellField, GridSpec, Norm};
use crate::mobility::{face_mobility, MeanKind, SlotboomExponent};
use crate::transport::{
    apply_transport_operator, charge_density, step, SchemeConfig, Species, State,
};
use crate::{Error, Result};

/// Largest grid (in cells) the dense routines accept.
pub const MAX_CELLS: usize = 4096;

fn check_size(spec: &GridSpec) -> Result<()> {
    if spec.len() > MAX_CELLS {
        return Err(Error::OracleSize { size: spec.len(), limit: MAX_CELLS });
    }
    Ok(())
}

/// A dense `n^dim × n^dim` matrix acting on cell fields in linear index
/// order.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub spec: GridSpec,
    pub matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn apply(&self, f: &CellField) -> Result<CellField> {
        f.check_same_grid(&self.spec)?;
        let v = DVector::from_column_slice(f.values());
        CellField::from_values(self.spec, (&self.matrix * v).as_slice().to_vec())
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Textbook form of the face mean of `e^{-S}`.
fn reference_mean(kind: MeanKind, s0: f64, s1: f64) -> f64 {
    let (a, b) = ((-s0).exp(), (-s1).exp());
    match kind {
        MeanKind::Harmonic => 2.0 * a * b / (a + b),
        MeanKind::Geometric => (a * b).sqrt(),
        MeanKind::Arithmetic => 0.5 * (a + b),
        MeanKind::Entropic => {
            let ds = s1 - s0;
            if ds.abs() < 1e-8 {
                a * (1.0 - ds / 2.0)
            } else {
                ds / (s0.exp() * ds.exp_m1())
            }
        }
    }
}

/// `A g = (e^{-S} ⊙ g)/Δt - ∇_h·(M ∇_h g)` with `S = q ψ`, assembled by
/// applying the matrix-free operator to every basis vector.
pub fn dense_transport_matrix(
    psi: &CellField,
    species: &Species,
    cfg: &SchemeConfig,
) -> Result<DenseOperator> {
    let spec = *psi.spec();
    check_size(&spec)?;
    let exponent = SlotboomExponent::from_potential(psi, species.valence)?;
    let w = exponent.cell_weight();
    let m = face_mobility(&exponent, cfg.mean);
    let len = spec.len();
    let mut a = DMatrix::zeros(len, len);
    let mut e = CellField::zeros(spec);
    for j in 0..len {
        e.values_mut()[j] = 1.0;
        let col = apply_transport_operator(&w, &m, cfg.dt, &e)?;
        a.column_mut(j).copy_from_slice(col.values());
        e.values_mut()[j] = 0.0;
    }
    Ok(DenseOperator { spec, matrix: a })
}

/// The same matrix as [`dense_transport_matrix`], assembled entry by entry
/// from the stencil.
pub fn stencil_transport_matrix(
    psi: &CellField,
    species: &Species,
    cfg: &SchemeConfig,
) -> Result<DenseOperator> {
    let spec = *psi.spec();
    check_size(&spec)?;
    let len = spec.len();
    let h2 = spec.h() * spec.h();
    let s: Vec<f64> = psi.values().iter().map(|p| species.valence * p).collect();
    let mut a = DMatrix::zeros(len, len);
    for i in 0..len {
        a[(i, i)] += (-s[i]).exp() / cfg.dt;
        let c = spec.coords(i);
        for axis in 0..spec.dim() {
            for step in [1isize, -1] {
                let mut nb = [c[0] as isize, c[1] as isize, c[2] as isize];
                nb[axis] += step;
                let j = spec.wrap_index(&nb);
                let m = reference_mean(cfg.mean, s[i], s[j]) / h2;
                a[(i, i)] += m;
                a[(i, j)] -= m;
            }
        }
    }
    Ok(DenseOperator { spec, matrix: a })
}

/// `-κ Δ_h` assembled entrywise.
pub fn dense_poisson_matrix(spec: &GridSpec, kappa: f64) -> Result<DenseOperator> {
    check_size(spec)?;
    let len = spec.len();
    let w = kappa / (spec.h() * spec.h());
    let mut a = DMatrix::zeros(len, len);
    for i in 0..len {
        let c = spec.coords(i);
        for axis in 0..spec.dim() {
            for step in [1isize, -1] {
                let mut nb = [c[0] as isize, c[1] as isize, c[2] as isize];
                nb[axis] += step;
                let j = spec.wrap_index(&nb);
                a[(i, i)] += w;
                a[(i, j)] -= w;
            }
        }
    }
    Ok(DenseOperator { spec: *spec, matrix: a })
}

/// Minimum-norm (hence zero-mean) solution of `-κ Δ_h ψ = rhs` through the
/// pseudo-inverse. `rhs` is expected to have zero mean.
pub fn dense_poisson_solve(rhs: &CellField, kappa: f64) -> Result<CellField> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let op = dense_poisson_matrix(rhs.spec(), kappa)?;
    let eps = 1e-10 * op.max_abs();
    let pinv = op
        .matrix
        .pseudo_inverse(eps)
        .map_err(|e| Error::Domain(format!("pseudo-inverse failed: {e}")))?;
    let x = pinv * DVector::from_column_slice(rhs.values());
    CellField::from_values(*rhs.spec(), x.as_slice().to_vec())
}

/// One step of the scheme by direct dense solves: Cholesky for every
/// species in the Slotboom variable, `c = e^{-S} ⊙ g`, then the
/// pseudo-inverse Poisson solve with the fixed charge at the new time.
pub fn dense_step(state: &State, cfg: &SchemeConfig, sources: Option<&[CellField]>) -> Result<State> {
    check_size(state.spec())?;
    let spec = *state.spec();
    let mut conc = Vec::with_capacity(cfg.species.len());
    for (l, sp) in cfg.species.iter().enumerate() {
        let a = dense_transport_matrix(&state.psi, sp, cfg)?;
        let mut b = DVector::from_iterator(spec.len(), state.conc[l].values().iter().map(|c| c / cfg.dt));
        if let Some(src) = sources {
            b += DVector::from_column_slice(src[l].values());
        }
        let chol = a
            .matrix
            .cholesky()
            .ok_or_else(|| Error::Domain("dense transport matrix is not positive definite".into()))?;
        let g = chol.solve(&b);
        let c: Vec<f64> = g
            .iter()
            .zip(state.psi.values())
            .map(|(g, p)| g * (-sp.valence * p).exp())
            .collect();
        conc.push(CellField::from_values(spec, c)?);
    }
    let time = state.time + cfg.dt;
    let rho = charge_density(&conc, cfg, time)?;
    let m = mean(&rho);
    let psi = dense_poisson_solve(&rho.map(|v| v - m), cfg.kappa)?;
    Ok(State { psi, conc, time })
}

/// Smooth zero-mean potential built from a few random low Fourier modes,
/// with peak amplitude around `amplitude`.
pub fn random_smooth_potential(rng: &mut impl Rng, spec: &GridSpec, amplitude: f64) -> CellField {
    let modes: Vec<([f64; 3], f64, f64)> = (0..3)
        .map(|_| {
            let mut k = [0.0; 3];
            while k.iter().all(|&v| v == 0.0) {
                for kv in k.iter_mut().take(spec.dim()) {
                    *kv = rng.random_range(-2i32..=2) as f64;
                }
            }
            (k, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.2..1.0))
        })
        .collect();
    let len = spec.hi() - spec.lo();
    let f = CellField::from_fn(*spec, |x| {
        modes
            .iter()
            .map(|(k, phase, a)| {
                let arg: f64 = (0..3).map(|d| k[d] * x[d]).sum::<f64>() * std::f64::consts::TAU / len;
                a * (arg + phase).cos()
            })
            .sum::<f64>()
            * amplitude
            / 3.0
    });
    let m = mean(&f);
    f.map(|v| v - m)
}

/// Independent positive values in `[lo, hi)`.
pub fn random_positive_field(rng: &mut impl Rng, spec: &GridSpec, lo: f64, hi: f64) -> CellField {
    CellField::from_values(*spec, (0..spec.len()).map(|_| rng.random_range(lo..hi)).collect())
        .expect("length matches grid")
}

/// Two positive random fields with equal means, so that unit charges of
/// opposite sign are electroneutral.
pub fn random_neutral_pair(rng: &mut impl Rng, spec: &GridSpec, lo: f64, hi: f64) -> Vec<CellField> {
    let a = random_positive_field(rng, spec, lo, hi);
    let b = random_positive_field(rng, spec, lo, hi);
    let ratio = mean(&a) / mean(&b);
    vec![a, b.scaled(ratio)]
}

/// One oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub comparisons: Vec<Comparison>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.comparisons.iter().all(Comparison::passed)
    }
}

/// Settings of [`verify`].
#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub dim: usize,
    pub n: usize,
    /// Random potentials per mean.
    pub trials: usize,
    pub seed: u64,
    /// Tolerance for operator application (relative to the row scale).
    pub apply_tol: f64,
    /// Tolerance for a full step in the max norm.
    pub step_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { dim: 2, n: 8, trials: 100, seed: 0, apply_tol: 1e-13, step_tol: 1e-10 }
    }
}

/// Cross-checks, for all four means, the matrix-free transport operator
/// against the dense matrix (every basis vector plus a random vector per
/// trial), the dense matrix against the stencil assembly, and the
/// matrix-free step against [`dense_step`].
pub fn verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let spec = GridSpec::unit(opts.dim, opts.n)?;
    check_size(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let species = vec![Species::new("p", 1.0)?, Species::new("m", -1.0)?];
    let mut report = VerifyReport::default();
    for kind in MeanKind::ALL {
        let mut cfg = SchemeConfig::new(1.0, 1e-3, kind, species.clone())?;
        cfg.transport_tol = 1e-13;
        cfg.poisson.tol = 1e-13;
        let mut apply_dev = 0.0f64;
        let mut stencil_dev = 0.0f64;
        let mut step_dev = 0.0f64;
        for _ in 0..opts.trials {
            let amp = rng.random_range(0.1..3.0);
            let psi = random_smooth_potential(&mut rng, &spec, amp);
            let sp = &species[rng.random_range(0..species.len())];
            let (a, st) = operator_deviation(&psi, sp, &cfg, &mut rng)?;
            apply_dev = apply_dev.max(a);
            stencil_dev = stencil_dev.max(st);

            cfg.dt = 10f64.powf(rng.random_range(-4.0..-1.0));
            let conc = random_neutral_pair(&mut rng, &spec, 0.05, 2.0);
            let state = State { psi, conc, time: 0.0 };
            let fast = step(&state, &cfg, None)?.state;
            let dense = dense_step(&state, &cfg, None)?;
            for (a, b) in fast.conc.iter().zip(&dense.conc).chain([(&fast.psi, &dense.psi)]) {
                let diff = a.zip_map(b, |x, y| x - y)?;
                step_dev = step_dev.max(norm(&diff, Norm::Linf)?);
            }
        }
        report.comparisons.push(Comparison {
            name: format!("{kind} operator apply (max relative)"),
            deviation: apply_dev,
            tolerance: opts.apply_tol,
        });
        report.comparisons.push(Comparison {
            name: format!("{kind} stencil assembly (max relative)"),
            deviation: stencil_dev,
            tolerance: opts.apply_tol,
        });
        report.comparisons.push(Comparison {
            name: format!("{kind} full step (max abs)"),
            deviation: step_dev,
            tolerance: opts.step_tol,
        });
    }
    Ok(report)
}

/// Largest relative deviations of (a) matrix-free application against the
/// dense product, over every basis vector and one random vector, and (b)
/// the stencil assembly against the dense matrix. Both are scaled by the
/// absolute row sum of the dense matrix.
fn operator_deviation(
    psi: &CellField,
    species: &Species,
    cfg: &SchemeConfig,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let spec = *psi.spec();
    let dense = dense_transport_matrix(psi, species, cfg)?;
    let stencil = stencil_transport_matrix(psi, species, cfg)?;
    let exponent = SlotboomExponent::from_potential(psi, species.valence)?;
    let w = exponent.cell_weight();
    let m = face_mobility(&exponent, cfg.mean);
    let row_scale: Vec<f64> = (0..spec.len())
        .map(|i| dense.matrix.row(i).iter().map(|v| v.abs()).sum())
        .collect();

    let mut apply_dev = 0.0f64;
    let mut probe = |v: CellField| -> Result<()> {
        let fast = apply_transport_operator(&w, &m, cfg.dt, &v)?;
        let slow = dense.apply(&v)?;
        let vmax = norm(&v, Norm::Linf)?;
        for i in 0..spec.len() {
            let dev = (fast.values()[i] - slow.values()[i]).abs() / (row_scale[i] * vmax);
            apply_dev = apply_dev.max(dev);
        }
        Ok(())
    };
    for j in 0..spec.len() {
        let mut e = CellField::zeros(spec);
        e.values_mut()[j] = 1.0;
        probe(e)?;
    }
    probe(random_positive_field(rng, &spec, -1.0, 1.0))?;

    let mut stencil_dev = 0.0f64;
    for i in 0..spec.len() {
        for j in 0..spec.len() {
            let dev = (dense.matrix[(i, j)] - stencil.matrix[(i, j)]).abs() / row_scale[i];
            stencil_dev = stencil_dev.max(dev);
        }
    }
    Ok((apply_dev, stencil_dev))
}
