//! Finite-dimensional toy model: F-interpolations solving Newton's system
//! `Ẍ = F″(X)F′(X)`, their cost and energy, and the convexity estimates built
//! on `λ(t) = ∫₀ᵗ |Ẋ + F′(X)|²`.

mod bvp;
mod diagnostics;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::report::{CurvatureMode, InequalityReport, Location, ReportMeta};

pub use bvp::{solve_newton_bvp, ToyPath, BVP_RESIDUAL_TOL};
pub use diagnostics::{
    check_toy_inequalities, lambda_curve, minimality_gap, path_cost, path_energy,
    ToyDiagnostics, TOY_TOLERANCE,
};

/// Tolerance of [`certify_convexity`].
pub const CONVEXITY_TOLERANCE: f64 = 1e-10;

/// A smooth potential `F: ℝᵈ → ℝ` on an open admissible set.
pub trait FModel: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
    }

    /// Right-hand side of Newton's system, `F″(x)F′(x)`.
    fn acceleration(&self, x: &[f64]) -> Vec<f64> {
        let g = DVector::from_vec(self.gradient(x));
        (self.hessian(x) * g).as_slice().to_vec()
    }

    /// Jacobian of [`FModel::acceleration`]; central differences by default.
    fn acceleration_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        acceleration_jacobian_fd(self, x)
    }
}

/// Central-difference Jacobian of the acceleration field.
pub fn acceleration_jacobian_fd<M: FModel + ?Sized>(model: &M, x: &[f64]) -> DMatrix<f64> {
    let d = model.dim();
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let step = 1e-6 * x[k].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += step;
        xm[k] -= step;
        let (gp, gm) = (model.acceleration(&xp), model.acceleration(&xm));
        for i in 0..d {
            jac[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    jac
}

/// `F ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPotential {
    pub dim: usize,
}

impl FModel for ZeroPotential {
    fn name(&self) -> String {
        "zero".into()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
    fn acceleration_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// `F(x) = ρ|x|²/2`, which is (ρ, ∞)-convex.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub rho: f64,
    pub dim: usize,
}

impl FModel for Quadratic {
    fn name(&self) -> String {
        format!("quadratic(rho={})", self.rho)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.rho * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.rho * v).collect()
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * self.rho
    }
    fn acceleration_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * (self.rho * self.rho)
    }
}

/// `F(x) = −n log x` on `(0, ∞)`, which is (0, n)-convex with equality.
#[derive(Debug, Clone, Copy)]
pub struct NegLog {
    pub n: f64,
}

impl FModel for NegLog {
    fn name(&self) -> String {
        format!("neglog(n={})", self.n)
    }
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        -self.n * x[0].ln()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![-self.n / x[0]]
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.n / (x[0] * x[0]))
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        x[0].is_finite() && x[0] > 0.0
    }
    fn acceleration(&self, x: &[f64]) -> Vec<f64> {
        vec![-self.n * self.n / x[0].powi(3)]
    }
    fn acceleration_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 3.0 * self.n * self.n / x[0].powi(4))
    }
}

/// Smallest eigenvalue of `F″ − ρI − F′⊗F′/n` over the samples (for the
/// (0, n) mode ρ = 0; for the (ρ, ∞) mode the rank-one term vanishes).
pub fn certify_convexity(
    model: &dyn FModel,
    mode: CurvatureMode,
    samples: &[Vec<f64>],
) -> Result<InequalityReport> {
    if samples.is_empty() {
        return Err(Error::Empty("no sample points for the convexity certificate"));
    }
    let (rho, inv_n) = match mode {
        CurvatureMode::RhoInfinity { rho } => (rho, 0.0),
        CurvatureMode::ZeroN { dim } => (0.0, 1.0 / dim),
    };
    let mut worst = (f64::INFINITY, 0usize);
    for (k, x) in samples.iter().enumerate() {
        if x.len() != model.dim() || !model.in_domain(x) {
            return Err(Error::Domain(format!(
                "sample {k} {x:?} is outside the admissible domain of {}",
                model.name()
            )));
        }
        let g = DVector::from_vec(model.gradient(x));
        let d = model.dim();
        let m = model.hessian(x) - DMatrix::identity(d, d) * rho - &g * g.transpose() * inv_n;
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        if min_eig < worst.0 {
            worst = (min_eig, k);
        }
    }
    let mut r = InequalityReport::new(
        format!("convexity_{}", mode.label()),
        Location::Point(worst.1),
        0.0,
        worst.0,
        CONVEXITY_TOLERANCE,
    )
    .with_meta(ReportMeta::default().with_mode(mode));
    r.meta.note = Some(model.name());
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_consistency(model: &dyn FModel, x: &[f64]) {
        let h = 1e-5;
        let g = model.gradient(x);
        let hess = model.hessian(x);
        for k in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let dg = (model.value(&xp) - model.value(&xm)) / (2.0 * h);
            assert!((dg - g[k]).abs() < 1e-7 * (1.0 + g[k].abs()));
            let (gp, gm) = (model.gradient(&xp), model.gradient(&xm));
            for i in 0..x.len() {
                let dh = (gp[i] - gm[i]) / (2.0 * h);
                assert!((dh - hess[(i, k)]).abs() < 1e-6 * (1.0 + hess[(i, k)].abs()));
            }
        }
    }

    #[test]
    fn presets_are_finite_difference_consistent() {
        fd_consistency(&Quadratic { rho: 1.3, dim: 2 }, &[0.4, -1.1]);
        fd_consistency(&NegLog { n: 2.0 }, &[0.7]);
        fd_consistency(&ZeroPotential { dim: 3 }, &[1.0, 2.0, 3.0]);
        let m = NegLog { n: 2.0 };
        let jac = m.acceleration_jacobian(&[0.7]);
        let fd = acceleration_jacobian_fd(&m, &[0.7]);
        assert!((jac[(0, 0)] - fd[(0, 0)]).abs() < 1e-5 * jac[(0, 0)].abs());
    }

    #[test]
    fn certificate_examples() {
        let samples: Vec<Vec<f64>> = (1..20).map(|k| vec![0.1 * k as f64]).collect();
        let r = certify_convexity(&Quadratic { rho: 2.0, dim: 1 }, CurvatureMode::RhoInfinity { rho: 2.0 }, &samples).unwrap();
        assert!(r.pass && r.slack == 0.0);
        let r = certify_convexity(&NegLog { n: 3.0 }, CurvatureMode::ZeroN { dim: 3.0 }, &samples).unwrap();
        assert!(r.pass && r.slack.abs() < 1e-12);
        let r = certify_convexity(&NegLog { n: 3.0 }, CurvatureMode::ZeroN { dim: 1.5 }, &samples).unwrap();
        assert!(!r.pass);
        let bad = vec![vec![-1.0]];
        assert!(matches!(
            certify_convexity(&NegLog { n: 1.0 }, CurvatureMode::ZeroN { dim: 1.0 }, &bad),
            Err(Error::Domain(_))
        ));
    }
}
