//! Published reference values used by the acceptance suite.

/// Grid sizes of the published error table.
pub const TABLE_N: [usize; 5] = [50, 60, 70, 80, 90];

/// Published l∞ errors at T = 0.1 with Δt = h², harmonic mean: rows
/// h = 1/50 … 1/90, columns c¹, c², ψ.
pub const HARMONIC_ERRORS: [[f64; 3]; 5] = [
    [2.00e-3, 1.80e-3, 1.20e-3],
    [1.40e-3, 1.20e-3, 8.37e-4],
    [1.00e-3, 9.19e-4, 6.16e-4],
    [7.65e-4, 7.03e-4, 4.71e-4],
    [6.05e-4, 5.56e-4, 3.73e-4],
];

/// Published c¹ error at h = 1/50, arithmetic mean.
pub const ARITHMETIC_C1_H50: f64 = 4.90e-3;

/// Published c¹ error at h = 1/50, entropic mean.
pub const ENTROPIC_C1_H50: f64 = 1.20e-3;

/// Relative band around published errors.
pub const ERROR_BAND: f64 = 0.2;

/// Accepted range of observed spatial orders.
pub const ORDER_RANGE: (f64, f64) = (1.85, 2.15);

#[cfg(test)]
mod tests {
    use super::*;

    // the published orders follow from the published errors
    #[test]
    fn harmonic_rows_are_second_order() {
        for w in HARMONIC_ERRORS.windows(2).zip(TABLE_N.windows(2)) {
            let (e, n) = w;
            for k in 0..3 {
                let order = (e[0][k] / e[1][k]).ln() / (n[1] as f64 / n[0] as f64).ln();
                assert!((1.7..2.4).contains(&order), "{order}");
            }
        }
    }
}
