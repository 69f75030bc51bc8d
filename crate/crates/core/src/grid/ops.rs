//! Difference/average operators, inner products and norms on periodic
//! grid functions. Every reduction runs sequentially in index order with
//! compensated summation, so results are reproducible bit for bit.

use super::{CellField, FaceField};
use crate::{Error, Result};

/// Grid norms available through [`norm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    L2,
    Lp(f64),
    Linf,
    /// `‖∇_h f‖_2`
    GradL2,
    H1,
    H2,
}

/// Neumaier-compensated sum in index order.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            comp += (s - t) + v;
        } else {
            comp += (v - t) + s;
        }
        s = t;
    }
    s + comp
}

/// `D_k f` on the faces of `axis`: `(f_{i+1} - f_i) / h`.
pub fn diff_forward(f: &CellField, axis: usize) -> Result<Vec<f64>> {
    let spec = f.spec();
    spec.check_axis(axis)?;
    let h = spec.h();
    let v = f.values();
    Ok((0..v.len())
        .map(|i| (v[spec.plus(i, axis)] - v[i]) / h)
        .collect())
}

/// `A_k f` on the faces of `axis`: `(f_{i+1} + f_i) / 2`.
pub fn avg_forward(f: &CellField, axis: usize) -> Result<Vec<f64>> {
    let spec = f.spec();
    spec.check_axis(axis)?;
    let v = f.values();
    Ok((0..v.len())
        .map(|i| 0.5 * (v[spec.plus(i, axis)] + v[i]))
        .collect())
}

/// Discrete gradient, `(D_x f, D_y f, D_z f)`.
pub fn gradient(f: &CellField) -> FaceField {
    let spec = *f.spec();
    let comps = (0..spec.dim())
        .map(|axis| diff_forward(f, axis).expect("axis within dim"))
        .collect();
    FaceField::from_components(spec, comps).expect("component shapes match grid")
}

/// Discrete divergence `Σ_k d_k F^k`.
pub fn divergence(field: &FaceField) -> CellField {
    let spec = *field.spec();
    let h = spec.h();
    let comps = field.components();
    let values = (0..spec.len())
        .map(|i| {
            let mut acc = 0.0;
            for (axis, c) in comps.iter().enumerate() {
                acc += (c[i] - c[spec.minus(i, axis)]) / h;
            }
            acc
        })
        .collect();
    CellField::from_values(spec, values).expect("length matches grid")
}

/// Standard five/seven-point Laplacian, evaluated as `∇_h · ∇_h f`.
pub fn laplacian(f: &CellField) -> CellField {
    divergence(&gradient(f))
}

/// `∇_h · (D ∇_h f)` for a strictly positive face coefficient `D`.
pub fn weighted_laplacian(d: &FaceField, f: &CellField) -> Result<CellField> {
    f.check_same_grid(d.spec())?;
    let low = d.min();
    if !(low > 0.0) {
        return Err(Error::Domain(format!(
            "face weights must be strictly positive, minimum is {low:e}"
        )));
    }
    let mut out = CellField::zeros(*f.spec());
    weighted_laplacian_into(d, f.values(), out.values_mut());
    Ok(out)
}

/// Unchecked kernel of [`weighted_laplacian`] writing into `out`. Slices
/// must have the length of `d`'s grid.
pub fn weighted_laplacian_into(d: &FaceField, f: &[f64], out: &mut [f64]) {
    let spec = d.spec();
    let h = spec.h();
    let comps = d.components();
    for (nb, o) in spec.neighbors().zip(out.iter_mut()) {
        let i = nb.idx;
        let fi = f[i];
        let mut acc = 0.0;
        for (axis, c) in comps.iter().enumerate() {
            let (up, dn) = (nb.up[axis], nb.down[axis]);
            acc += (c[i] * ((f[up] - fi) / h) - c[dn] * ((fi - f[dn]) / h)) / h;
        }
        *o = acc;
    }
}

/// `ū = h^dim Σ f / |Ω|`.
pub fn mean(f: &CellField) -> f64 {
    let spec = f.spec();
    spec.cell_volume() * sum(f.values().iter().copied()) / spec.volume()
}

/// `⟨f, g⟩ = h^dim Σ f g`.
pub fn inner(f: &CellField, g: &CellField) -> Result<f64> {
    f.check_same_grid(g.spec())?;
    Ok(f.spec().cell_volume() * sum(f.values().iter().zip(g.values()).map(|(a, b)| a * b)))
}

/// `[F, G] = Σ_k ⟨a_k(F^k G^k), 1⟩`.
pub fn face_inner(f: &FaceField, g: &FaceField) -> Result<f64> {
    if f.spec() != g.spec() {
        return Err(Error::GridMismatch);
    }
    let spec = *f.spec();
    let mut total = 0.0;
    for axis in 0..spec.dim() {
        let a = &f.components()[axis];
        let b = &g.components()[axis];
        let avg = (0..spec.len()).map(|i| {
            let j = spec.minus(i, axis);
            0.5 * (a[i] * b[i] + a[j] * b[j])
        });
        total += sum(avg);
    }
    Ok(spec.cell_volume() * total)
}

pub fn norm(f: &CellField, kind: Norm) -> Result<f64> {
    let w = f.spec().cell_volume();
    Ok(match kind {
        Norm::L2 => inner(f, f)?.sqrt(),
        Norm::Lp(p) => {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::InvalidParameter(format!("norm exponent must be >= 1, got {p}")));
            }
            (w * sum(f.values().iter().map(|v| v.abs().powf(p)))).powf(1.0 / p)
        }
        Norm::Linf => f.values().iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        Norm::GradL2 => {
            let g = gradient(f);
            face_inner(&g, &g)?.sqrt()
        }
        Norm::H1 => (norm(f, Norm::L2)?.powi(2) + norm(f, Norm::GradL2)?.powi(2)).sqrt(),
        Norm::H2 => {
            (norm(f, Norm::H1)?.powi(2) + norm(&laplacian(f), Norm::L2)?.powi(2)).sqrt()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GridSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn random_field(spec: GridSpec, seed: &[f64]) -> CellField {
        CellField::from_values(spec, seed.iter().take(spec.len()).copied().collect()).unwrap()
    }

    #[test]
    fn constant_has_zero_difference_and_same_average() {
        let g = GridSpec::unit(3, 4).unwrap();
        let f = CellField::constant(g, 2.5);
        for axis in 0..3 {
            assert!(diff_forward(&f, axis).unwrap().iter().all(|&v| v == 0.0));
            assert!(avg_forward(&f, axis).unwrap().iter().all(|&v| v == 2.5));
        }
        assert!(laplacian(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_cell_stencils() {
        let g = GridSpec::unit(1, 2).unwrap();
        let f = CellField::from_values(g, vec![0.0, 1.0]).unwrap();
        assert_eq!(diff_forward(&f, 0).unwrap(), vec![2.0, -2.0]);
        assert_eq!(avg_forward(&f, 0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn invalid_axis_rejected() {
        let f = CellField::zeros(GridSpec::unit(2, 4).unwrap());
        assert!(matches!(diff_forward(&f, 2), Err(Error::InvalidAxis { axis: 2, dim: 2 })));
        assert!(avg_forward(&f, 5).is_err());
    }

    #[test]
    fn cosine_difference_identity() {
        let n = 16;
        let g = GridSpec::unit(1, n).unwrap();
        let h = g.h();
        let f = CellField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let d = diff_forward(&f, 0).unwrap();
        for (i, v) in d.iter().enumerate() {
            let xf = g.face_center(i, 0)[0];
            let expected = -(2.0 / h) * (PI * h).sin() * (2.0 * PI * xf).sin();
            assert!((v - expected).abs() < 1e-12, "face {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn averages_are_linear() {
        let g = GridSpec::unit(2, 5).unwrap();
        let f = CellField::from_fn(g, |x| x[0] * x[1] + 1.0);
        let q = CellField::from_fn(g, |x| (x[0] - x[1]).sin());
        let fg = f.zip_map(&q, |a, b| a + b).unwrap();
        for axis in 0..2 {
            let lhs = avg_forward(&fg, axis).unwrap();
            let a = avg_forward(&f, axis).unwrap();
            let b = avg_forward(&q, axis).unwrap();
            for i in 0..lhs.len() {
                assert!((lhs[i] - (a[i] + b[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_eigenvalue_of_cosine_mode() {
        let g = GridSpec::unit(1, 16).unwrap();
        let h = g.h();
        let f = CellField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let lam = (4.0 / (h * h)) * (PI * h).sin().powi(2);
        let lf = laplacian(&f);
        for (a, b) in lf.values().iter().zip(f.values()) {
            assert!((a + lam * b).abs() < 1e-11 * lam);
        }
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let g = GridSpec::unit(2, 6).unwrap();
        assert!(divergence(&FaceField::zeros(g)).values().iter().all(|&v| v == 0.0));
    }

    // Dense oracle: explicit stencil coefficients assembled row by row.
    fn dense_weighted_laplacian(d: &FaceField) -> Vec<Vec<f64>> {
        let spec = *d.spec();
        let h2 = spec.h() * spec.h();
        let n = spec.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            let c = spec.coords(i);
            for axis in 0..spec.dim() {
                let mut up = [c[0] as isize, c[1] as isize, c[2] as isize];
                let mut dn = up;
                up[axis] += 1;
                dn[axis] -= 1;
                let iu = spec.wrap_index(&up);
                let id = spec.wrap_index(&dn);
                let wp = d.components()[axis][i] / h2;
                let wm = d.components()[axis][id] / h2;
                row[iu] += wp;
                row[id] += wm;
                row[i] -= wp + wm;
            }
        }
        m
    }

    #[test]
    fn weighted_laplacian_matches_dense_assembly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = GridSpec::unit(2, 8).unwrap();
        let d = FaceField::from_components(
            g,
            (0..2)
                .map(|_| (0..g.len()).map(|_| rng.random_range(0.1..3.0)).collect())
                .collect(),
        )
        .unwrap();
        let f = CellField::from_values(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let dense = dense_weighted_laplacian(&d);
        let got = weighted_laplacian(&d, &f).unwrap();
        let scale = dense.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, row) in dense.iter().enumerate() {
            let expect: f64 = row.iter().zip(f.values()).map(|(a, b)| a * b).sum();
            assert!((got.values()[i] - expect).abs() <= 1e-12 * scale, "row {i}");
        }
    }

    #[test]
    fn weighted_laplacian_rejects_non_positive_weight() {
        let g = GridSpec::unit(1, 4).unwrap();
        let mut d = FaceField::constant(g, 1.0);
        d.components_mut()[0][2] = 0.0;
        assert!(matches!(
            weighted_laplacian(&d, &CellField::zeros(g)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_laplacian_of_constant_vanishes() {
        let g = GridSpec::unit(2, 5).unwrap();
        let d = FaceField::from_fn(g, |x, _| 1.0 + x[0] * x[0]);
        let out = weighted_laplacian(&d, &CellField::constant(g, 3.0)).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_examples() {
        let g = GridSpec::unit(2, 4).unwrap();
        let one = CellField::constant(g, 1.0);
        assert!((mean(&one) - 1.0).abs() < 1e-15);
        assert!((norm(&one, Norm::L2).unwrap() - 1.0).abs() < 1e-15);
        assert!((norm(&one, Norm::Lp(3.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(norm(&one, Norm::GradL2).unwrap(), 0.0);
        assert!(norm(&one, Norm::Lp(0.5)).is_err());

        let g1 = GridSpec::unit(1, 2).unwrap();
        let f = CellField::from_values(g1, vec![-3.0, 2.0]).unwrap();
        assert_eq!(norm(&f, Norm::Linf).unwrap(), 3.0);
    }

    #[test]
    fn gradient_norm_of_cosine_mode() {
        let g = GridSpec::unit(1, 16).unwrap();
        let h = g.h();
        let f = CellField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        // direct summation over faces of (D f)^2, independent of face_inner
        let mut direct = 0.0;
        for i in 0..16isize {
            let d = (f.at(&[i + 1]) - f.at(&[i])) / h;
            direct += h * d * d;
        }
        let sin_mode_sq: f64 = (0..16).map(|i| h * (2.0 * PI * (i as f64 + 1.0) * h).sin().powi(2)).sum();
        let predicted = (4.0 / (h * h)) * (PI * h).sin().powi(2) * sin_mode_sq;
        let got = norm(&f, Norm::GradL2).unwrap().powi(2);
        assert!((got - direct).abs() < 1e-12 * direct);
        assert!((got - predicted).abs() < 1e-12 * predicted);
        let h1 = norm(&f, Norm::H1).unwrap();
        assert!((h1 * h1 - got - norm(&f, Norm::L2).unwrap().powi(2)).abs() < 1e-12 * got);
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(v), 2.0);
    }

    fn arb_case() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
        (1usize..=3, 2usize..=6).prop_flat_map(|(dim, n)| {
            let len = n.pow(dim as u32);
            (
                Just(dim),
                Just(n),
                prop::collection::vec(-1.0f64..1.0, len),
                prop::collection::vec(-1.0f64..1.0, len * dim),
            )
        })
    }

    proptest! {
        #[test]
        fn summation_by_parts((dim, n, fv, fc) in arb_case()) {
            let g = GridSpec::new(dim, n, -0.5, 1.5).unwrap();
            let f = random_field(g, &fv);
            let comps = fc.chunks(g.len()).map(|c| c.to_vec()).collect();
            let big = FaceField::from_components(g, comps).unwrap();
            let lhs = inner(&divergence(&big), &f).unwrap();
            let rhs = -face_inner(&big, &gradient(&f)).unwrap();
            let scale = inner(&divergence(&big).map(f64::abs), &f.map(f64::abs)).unwrap() + 1e-300;
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale.max(lhs.abs()));
        }

        #[test]
        fn laplacian_composition_and_mean((dim, n, fv, _fc) in arb_case()) {
            let g = GridSpec::new(dim, n, 0.0, 2.0).unwrap();
            let f = random_field(g, &fv);
            let lap = laplacian(&f);
            prop_assert_eq!(&lap, &divergence(&gradient(&f)));
            prop_assert_eq!(&lap, &weighted_laplacian(&FaceField::constant(g, 1.0), &f).unwrap());
            let m = mean(&lap);
            let scale = norm(&lap, Norm::Linf).unwrap();
            prop_assert!(m.abs() <= 1e-13 * scale + 1e-300);
            let total = sum(divergence(&gradient(&f)).values().iter().copied());
            prop_assert!(total.abs() <= 1e-12 * scale * g.len() as f64 + 1e-300);
        }
    }
}
