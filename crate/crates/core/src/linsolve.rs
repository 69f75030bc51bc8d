//! Matrix-free preconditioned conjugate gradients on flat `f64` vectors.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Target for `‖b - A x‖_2 / ‖b‖_2`.
    pub tol: f64,
    pub max_iter: usize,
    /// Work on the zero-sum subspace: the right-hand side, every residual
    /// and preconditioned residual, and the final iterate are projected.
    pub project_mean: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// True relative residual of the returned iterate.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = crate::grid::sum(v.iter().copied()) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, starting
/// from the contents of `x`. `inv_diag` is the Jacobi preconditioner
/// (reciprocal of the diagonal); `None` means no preconditioning.
///
/// Convergence is judged on the recursively updated residual and then
/// confirmed on the true residual; if the two disagree the iteration
/// restarts from the current iterate until the budget is spent.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    inv_diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    opts: &CgOptions,
) -> Result<SolveStats> {
    let n = b.len();
    assert_eq!(x.len(), n, "iterate and right-hand side lengths differ");

    let mut rhs = b.to_vec();
    if opts.project_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }

    let precondition = |r: &[f64], z: &mut [f64]| {
        match inv_diag {
            Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (r, d))| *z = r * d),
            None => z.copy_from_slice(r),
        }
        if opts.project_mean {
            remove_mean(z);
        }
    };

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    let true_residual = |apply: &mut dyn FnMut(&[f64], &mut [f64]), x: &[f64], r: &mut [f64]| {
        apply(x, r);
        for (ri, bi) in r.iter_mut().zip(&rhs) {
            *ri = bi - *ri;
        }
        if opts.project_mean {
            remove_mean(r);
        }
        dot(r, r).sqrt() / bnorm
    };

    loop {
        let rel = true_residual(&mut apply, x, &mut r);
        if rel <= opts.tol {
            return Ok(SolveStats { iterations, residual: rel });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, residual: rel });
        }

        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let start = iterations;
        while iterations < opts.max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                // breakdown: fall back to the outer true-residual check
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if dot(&r, &r).sqrt() <= opts.tol * bnorm {
                break;
            }
            precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if opts.project_mean {
            remove_mean(x);
        }
        if iterations == start {
            let rel = true_residual(&mut apply, x, &mut r);
            return Err(Error::NonConvergence { iterations, residual: rel });
        }
    }
}
