//! Face mobilities `e^{-S}` evaluated on staggered faces from cell values
//! of the Slotboom exponent `S = qψ`.
//!
//! When an intermediate `e^{±S}` could overflow, the means are evaluated in
//! log form with the larger (or smaller) exponent factored out, so a mean
//! only underflows when its exact value is below the smallest positive
//! `f64`.

use std::fmt;
use std::str::FromStr;

use crate::grid::{CellField, FaceField};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeanKind {
    Harmonic,
    Geometric,
    Arithmetic,
    /// Inverse logarithmic mean of `e^S`; gives the Scharfetter–Gummel flux.
    Entropic,
}

impl MeanKind {
    pub const ALL: [MeanKind; 4] = [
        MeanKind::Harmonic,
        MeanKind::Geometric,
        MeanKind::Arithmetic,
        MeanKind::Entropic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MeanKind::Harmonic => "harmonic",
            MeanKind::Geometric => "geometric",
            MeanKind::Arithmetic => "arithmetic",
            MeanKind::Entropic => "entropic",
        }
    }

    /// Mean of `e^{-s0}` and `e^{-s1}` for one face.
    #[inline]
    pub fn face_value(&self, s0: f64, s1: f64) -> f64 {
        let hi = s0.max(s1);
        let lo = s0.min(s1);
        let gap = hi - lo;
        match self {
            // 1 / A(e^S) = e^{-hi} * 2 / (1 + e^{-gap})
            MeanKind::Harmonic => {
                if hi.abs() < 700.0 && lo.abs() < 700.0 {
                    1.0 / (0.5 * (s0.exp() + s1.exp()))
                } else {
                    (-hi + std::f64::consts::LN_2 - (-gap).exp().ln_1p()).exp()
                }
            }
            MeanKind::Geometric => {
                if hi.abs() < 350.0 && lo.abs() < 350.0 {
                    ((-s0).exp() * (-s1).exp()).sqrt()
                } else {
                    (-0.5 * (s0 + s1)).exp()
                }
            }
            // e^{-lo} * (1 + e^{-gap}) / 2
            MeanKind::Arithmetic => {
                if hi.abs() < 700.0 && lo.abs() < 700.0 {
                    0.5 * ((-s0).exp() + (-s1).exp())
                } else {
                    (-lo - std::f64::consts::LN_2 + (-gap).exp().ln_1p()).exp()
                }
            }
            // e^{-hi} * gap / (1 - e^{-gap})
            MeanKind::Entropic => {
                let factor = exprel_inv_neg(gap);
                if hi.abs() < 700.0 {
                    (-hi).exp() * factor
                } else {
                    (-hi + factor.ln()).exp()
                }
            }
        }
    }
}

/// `x / (1 - e^{-x})` for `x >= 0`, with a series branch near zero.
#[inline]
fn exprel_inv_neg(x: f64) -> f64 {
    if x < 1e-5 {
        1.0 + x / 2.0 + x * x / 12.0
    } else {
        -x / (-x).exp_m1()
    }
}

impl fmt::Display for MeanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "harmonic" => Ok(MeanKind::Harmonic),
            "geometric" => Ok(MeanKind::Geometric),
            "arithmetic" => Ok(MeanKind::Arithmetic),
            "entropic" => Ok(MeanKind::Entropic),
            other => Err(Error::InvalidParameter(format!(
                "unknown mean `{other}` (expected harmonic, geometric, arithmetic or entropic)"
            ))),
        }
    }
}

/// Cell values of the dimensionless exponent `S = qψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotboomExponent(CellField);

impl SlotboomExponent {
    pub fn new(s: CellField) -> Result<Self> {
        if let Some(i) = s.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("Slotboom exponent is not finite at cell {i}")));
        }
        Ok(Self(s))
    }

    /// `S = q ψ`.
    pub fn from_potential(psi: &CellField, valence: f64) -> Result<Self> {
        Self::new(psi.scaled(valence))
    }

    pub fn field(&self) -> &CellField {
        &self.0
    }

    /// Exact pointwise `e^{-S}` at cell centers.
    pub fn cell_weight(&self) -> CellField {
        self.0.map(|s| (-s).exp())
    }
}

/// Face mobility for every face of the grid.
pub fn face_mobility(s: &SlotboomExponent, kind: MeanKind) -> FaceField {
    let field = s.field();
    let spec = *field.spec();
    let v = field.values();
    let comps = (0..spec.dim())
        .map(|axis| {
            (0..spec.len())
                .map(|i| kind.face_value(v[i], v[spec.plus(i, axis)]))
                .collect()
        })
        .collect();
    FaceField::from_components(spec, comps).expect("shapes match grid")
}
