//! Real Fourier basis on a uniform periodic grid.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// One periodic axis: an orthonormal real Fourier basis (with respect to the
/// uniform quadrature weight `h = L/n`) and the dense operators built from it.
#[derive(Debug, Clone)]
pub(crate) struct FourierAxis {
    pub h: f64,
    /// Columns are the basis functions sampled on the grid.
    pub basis: DMatrix<f64>,
    /// Eigenvalue −ω² of each basis column.
    pub eigenvalues: Vec<f64>,
    /// Spectral first derivative.
    pub deriv: DMatrix<f64>,
    /// Spectral second derivative (the Laplacian on this axis).
    pub lap: DMatrix<f64>,
}

impl FourierAxis {
    pub fn new(n: usize, length: f64) -> Self {
        let h = length / n as f64;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut basis = DMatrix::zeros(n, n);
        let mut dbasis = DMatrix::zeros(n, n);
        let mut eigenvalues = Vec::with_capacity(n);
        let c0 = 1.0 / length.sqrt();
        let c1 = (2.0 / length).sqrt();
        let mut col = 0;
        for i in 0..n {
            basis[(i, col)] = c0;
        }
        eigenvalues.push(0.0);
        col += 1;
        let kmax = (n - 1) / 2;
        for k in 1..=kmax {
            let omega = 2.0 * PI * k as f64 / length;
            for (i, &xi) in x.iter().enumerate() {
                let (s, c) = (omega * xi).sin_cos();
                basis[(i, col)] = c1 * c;
                dbasis[(i, col)] = -c1 * omega * s;
                basis[(i, col + 1)] = c1 * s;
                dbasis[(i, col + 1)] = c1 * omega * c;
            }
            eigenvalues.extend([-omega * omega; 2]);
            col += 2;
        }
        if n.is_multiple_of(2) {
            let k = n / 2;
            let omega = 2.0 * PI * k as f64 / length;
            for i in 0..n {
                basis[(i, col)] = if i % 2 == 0 { c0 } else { -c0 };
            }
            eigenvalues.push(-omega * omega);
        }
        let analysis = basis.transpose() * h;
        let deriv = &dbasis * &analysis;
        let lap = &basis * DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone())) * &analysis;
        FourierAxis {
            h,
            basis,
            eigenvalues,
            deriv,
            lap,
        }
    }

    /// Multipliers `e^{λt}` of the heat semigroup on the basis.
    pub fn decay(&self, t: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| (l * t).exp()).collect()
    }

    /// `Φ diag(d) Φᵀ h v` for a single column.
    pub fn filter(&self, decay: &[f64], v: &[f64]) -> Vec<f64> {
        let mut c = self.basis.tr_mul(&DVector::from_column_slice(v)) * self.h;
        for (ck, dk) in c.iter_mut().zip(decay) {
            *ck *= dk;
        }
        (&self.basis * c).as_slice().to_vec()
    }

    /// The same filter along both axes of an `n × n` field.
    pub fn filter2(&self, decay: &[f64], f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.basis.tr_mul(f) * &self.basis * (self.h * self.h);
        for j in 0..c.ncols() {
            for i in 0..c.nrows() {
                c[(i, j)] *= decay[i] * decay[j];
            }
        }
        &self.basis * c * self.basis.transpose()
    }
}
