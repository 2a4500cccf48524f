use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Ladder and quadrature operators in the number basis `|0⟩…|N−1⟩`, with
/// `x = (a + a†)/√2` and `p = −i(a − a†)/√2`.
///
/// Dense matrices are kept for exponentiation; the banded `apply_*`
/// methods are what the time steppers use.
#[derive(Debug, Clone)]
pub struct FockOperators {
    dim: usize,
    sqrt_n: Vec<f64>,
    pub a: DMatrix<Complex64>,
    pub adag: DMatrix<Complex64>,
    pub n: DMatrix<Complex64>,
    pub x: DMatrix<Complex64>,
    pub p: DMatrix<Complex64>,
    /// `x·x` of the truncated `x` (differs from the restriction of the
    /// infinite-space `x²` only in the last diagonal entry).
    pub x2: DMatrix<Complex64>,
}

impl FockOperators {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(invalid("n_dim", "truncation must keep at least two levels"));
        }
        let sqrt_n: Vec<f64> = (0..dim).map(|k| (k as f64).sqrt()).collect();
        let mut a = DMatrix::from_element(dim, dim, ZERO);
        for k in 1..dim {
            a[(k - 1, k)] = Complex64::new(sqrt_n[k], 0.0);
        }
        let adag = a.adjoint();
        let n = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(i as f64, 0.0)
            } else {
                ZERO
            }
        });
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = (&a + &adag) * Complex64::new(s, 0.0);
        let p = (&a - &adag) * Complex64::new(0.0, -s);
        let x2 = &x * &x;
        Ok(Self {
            dim,
            sqrt_n,
            a,
            adag,
            n,
            x,
            p,
            x2,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = x·psi`.
    pub fn apply_x(&self, psi: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = self.dim;
        for k in 0..d {
            let mut acc = ZERO;
            if k > 0 {
                acc += psi[k - 1] * self.sqrt_n[k];
            }
            if k + 1 < d {
                acc += psi[k + 1] * self.sqrt_n[k + 1];
            }
            out[k] = acc * s;
        }
    }

    /// `out = p·psi`.
    pub fn apply_p(&self, psi: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = self.dim;
        for k in 0..d {
            let mut acc = ZERO;
            if k + 1 < d {
                acc += psi[k + 1] * self.sqrt_n[k + 1];
            }
            if k > 0 {
                acc -= psi[k - 1] * self.sqrt_n[k];
            }
            out[k] = acc * Complex64::new(0.0, -s);
        }
    }

    /// `out = n·psi`.
    pub fn apply_n(&self, psi: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        for k in 0..self.dim {
            out[k] = psi[k] * k as f64;
        }
    }
}
