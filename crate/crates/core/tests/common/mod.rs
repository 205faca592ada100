//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

/// Closed-form Schrödinger potentials between two Gaussians on the
/// Ornstein-Uhlenbeck line, with densities taken relative to the standard
/// Gaussian.
///
/// Both potentials are log-quadratic, `f = exp(−a x²/2 + b x + k_f)` and
/// `g = exp(−c x²/2 + d x + k_g)`. Pushing them through the Mehler formula
/// turns the Schrödinger system into a fixed point for `(a, b, c, d)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianBridge {
    pub a: f64,
    pub b: f64,
    pub k_f: f64,
    pub c: f64,
    pub d: f64,
    pub k_g: f64,
    pub horizon: f64,
    mu: (f64, f64),
    nu: (f64, f64),
}

/// `log E[exp(−c y²/2 + d y)]` for `y ~ N(m, v)`.
fn log_gauss_mgf(c: f64, d: f64, m: f64, v: f64) -> f64 {
    let a = 1.0 + c * v;
    -0.5 * a.ln() + (-0.5 * c * m * m + d * m + 0.5 * d * d * v) / a
}

/// Coefficients of `log(dN(m, v)/dγ) = −p x²/2 + q x + r`.
fn relative_log_density(m: f64, v: f64) -> (f64, f64, f64) {
    (1.0 / v - 1.0, m / v, -0.5 * v.ln() - 0.5 * m * m / v)
}

impl GaussianBridge {
    /// `mu` and `nu` are (mean, variance) pairs.
    pub fn solve(mu: (f64, f64), nu: (f64, f64), horizon: f64) -> Self {
        let e = (-horizon).exp();
        let q = e * e;
        let s2 = 1.0 - q;
        let (pm, qm, rm) = relative_log_density(mu.0, mu.1);
        let (pn, qn, _) = relative_log_density(nu.0, nu.1);
        let (mut a, mut b, mut c, mut d) = (1.0, 0.0, 1.0, 0.0);
        for _ in 0..10_000 {
            let big_a = 1.0 + c * s2;
            a = pm - c * q / big_a;
            b = qm - d * e / big_a;
            let big_a2 = 1.0 + a * s2;
            c = pn - a * q / big_a2;
            d = qn - b * e / big_a2;
        }
        // log P_T g(x) = −c e² x²/(2A) + d e x / A + const + k_g
        let big_a = 1.0 + c * s2;
        let const_pg = -0.5 * big_a.ln() + 0.5 * d * d * s2 / big_a;
        let sum = rm - const_pg;
        // ∫ f dγ = ∫ g dγ fixes the split of k_f + k_g
        let lf = log_gauss_mgf(a, b, 0.0, 1.0);
        let lg = log_gauss_mgf(c, d, 0.0, 1.0);
        let k_f = 0.5 * (sum + lg - lf);
        let k_g = sum - k_f;
        GaussianBridge { a, b, k_f, c, d, k_g, horizon, mu, nu }
    }

    pub fn log_f(&self, x: f64) -> f64 {
        -0.5 * self.a * x * x + self.b * x + self.k_f
    }

    pub fn log_g(&self, x: f64) -> f64 {
        -0.5 * self.c * x * x + self.d * x + self.k_g
    }

    /// `log P_T g(x)`.
    pub fn log_heat_g(&self, x: f64) -> f64 {
        let e = (-self.horizon).exp();
        log_gauss_mgf(self.c, self.d, e * x, 1.0 - e * e) + self.k_g
    }

    /// Relative entropy of `N(m, v)` with respect to the standard Gaussian.
    pub fn kl(m: f64, v: f64) -> f64 {
        0.5 * (v + m * m - 1.0 - v.ln())
    }

    /// `C_T = 4(E_ν log g − E_μ log P_T g) − 2(F(ν) − F(μ))`.
    pub fn cost(&self) -> f64 {
        let (mm, vm) = self.mu;
        let (mn, vn) = self.nu;
        let e_nu_log_g = -0.5 * self.c * (vn + mn * mn) + self.d * mn + self.k_g;
        let e = (-self.horizon).exp();
        let big_a = 1.0 + self.c * (1.0 - e * e);
        // log P_T g is quadratic: −c e² x²/(2A) + d e x/A + const
        let k2 = self.c * e * e / big_a;
        let k1 = self.d * e / big_a;
        let k0 = self.log_heat_g(0.0);
        let e_mu_log_pg = -0.5 * k2 * (vm + mm * mm) + k1 * mm + k0;
        4.0 * (e_nu_log_g - e_mu_log_pg) - 2.0 * (Self::kl(mn, vn) - Self::kl(mm, vm))
    }

    /// `Λ = C_T + 2(F(ν) − F(μ))`.
    pub fn lambda(&self) -> f64 {
        self.cost() + 2.0 * (Self::kl(self.nu.0, self.nu.1) - Self::kl(self.mu.0, self.mu.1))
    }
}
