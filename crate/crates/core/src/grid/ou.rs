//! Ornstein-Uhlenbeck line truncated to [−R, R].
//!
//! The semigroup is the Mehler kernel integrated by the trapezoid rule, then
//! symmetrically rescaled so that it fixes constants exactly while staying
//! reversible with respect to the discrete Gaussian weights. Derivatives use
//! wide finite-difference stencils, exact on polynomials up to degree ten.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::Stencil;

pub(crate) const STENCIL_WIDTH: usize = 11;
const HERMITE_MODES: usize = 11;
const SCALING_MAX_ITER: usize = 2000;

#[derive(Debug, Clone)]
pub(crate) struct OuAxis {
    pub x: Vec<f64>,
    pub h: f64,
    pub weights: Vec<f64>,
    pub d1: Stencil,
    pub d2: Stencil,
    /// Probabilists' Hermite polynomials He_k, normalized in the discrete
    /// weights; column k has eigenvalue −k.
    pub hermite: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl OuAxis {
    pub fn new(n: usize, half_width: f64) -> Self {
        let h = 2.0 * half_width / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| -half_width + i as f64 * h).collect();
        let mut weights: Vec<f64> = x.iter().map(|&xi| (-0.5 * xi * xi).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        let modes = HERMITE_MODES.min(n / 4);
        let mut hermite = DMatrix::zeros(n, modes);
        for (i, &xi) in x.iter().enumerate() {
            let (mut prev, mut cur) = (0.0, 1.0);
            for k in 0..modes {
                hermite[(i, k)] = cur;
                let next = xi * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
        }
        for k in 0..modes {
            let norm: f64 = (0..n).map(|i| weights[i] * hermite[(i, k)].powi(2)).sum::<f64>().sqrt();
            hermite.column_mut(k).scale_mut(1.0 / norm);
        }
        let width = STENCIL_WIDTH.min(n);
        OuAxis {
            d1: Stencil::new(&x, 1, width),
            d2: Stencil::new(&x, 2, width),
            x,
            h,
            weights,
            hermite,
            eigenvalues: (0..modes).map(|k| -(k as f64)).collect(),
        }
    }

    pub fn generator(&self, f: &[f64]) -> Vec<f64> {
        let d1 = self.d1.apply(f);
        let d2 = self.d2.apply(f);
        (0..f.len()).map(|i| d2[i] - self.x[i] * d1[i]).collect()
    }

    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        self.d1.apply(f)
    }

    /// Row-stochastic, weight-reversible discretization of the Mehler kernel.
    pub fn kernel(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.x.len();
        let q = (-t).exp();
        let var = -(-2.0 * t).exp_m1();
        if var.sqrt() < 0.5 * self.h {
            return Err(Error::Numerical(format!(
                "heat time {t:e} is below the resolution of the OU grid (spacing {:e})",
                self.h
            )));
        }
        if var.sqrt() < 1.2 * self.h {
            debug!("OU heat kernel at t = {t:e} is close to the grid resolution");
        }
        let b = DMatrix::from_fn(n, n, |i, j| {
            let z = self.x[j] - q * self.x[i];
            (-z * z / (2.0 * var)).exp()
        });
        let mut d = DVector::from_element(n, 1.0);
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for _ in 0..SCALING_MAX_ITER {
            let bd = &b * &d;
            let mut err: f64 = 0.0;
            for i in 0..n {
                if bd[i] <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "empty heat kernel row {i} at t = {t:e}"
                    )));
                }
                err = err.max((d[i] * bd[i] - 1.0).abs());
            }
            if err < 2e-15 {
                break;
            }
            if err < best * 0.999 {
                best = err;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 8 {
                    break;
                }
            }
            for i in 0..n {
                d[i] = (d[i] / bd[i]).sqrt();
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| d[i] * b[(i, j)] * d[j]))
    }
}
