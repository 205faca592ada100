use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::{certify_convexity, FModel, ToyPath};
use crate::error::{Error, Result};
use crate::numerics::{
    cumulative_integral, lsi_coefficient, reverse_lsi_coefficient, simpson, Stencil,
};
use crate::report::{write_csv, CurvatureMode, InequalityReport, Location, ReportMeta};

/// Slack tolerance of the toy inequalities.
pub const TOY_TOLERANCE: f64 = 1e-6;

const DERIV_STENCIL: usize = 9;
const PERTURBATION_MODES: usize = 4;

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// `∫₀ᵀ |Ẋ|² + |F′(X)|² dt` by composite Simpson.
pub fn path_cost(model: &dyn FModel, path: &ToyPath) -> f64 {
    let integrand: Vec<f64> = path
        .states
        .iter()
        .zip(&path.velocities)
        .map(|(x, v)| sq_norm(v) + sq_norm(&model.gradient(x)))
        .collect();
    simpson(&integrand, path.step())
}

fn energy_samples(model: &dyn FModel, path: &ToyPath) -> Vec<f64> {
    path.states
        .iter()
        .zip(&path.velocities)
        .map(|(x, v)| sq_norm(v) - sq_norm(&model.gradient(x)))
        .collect()
}

/// Mean of `E(t) = |Ẋ|² − |F′(X)|²` over the nodes and its largest deviation
/// from that mean.
pub fn path_energy(model: &dyn FModel, path: &ToyPath) -> (f64, f64) {
    let e = energy_samples(model, path);
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let dev = e.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    (mean, dev)
}

/// Time series of a toy path: λ, Φ = λ − tE and their derivatives.
#[derive(Debug, Clone)]
pub struct ToyDiagnostics {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub cost: f64,
    pub energy: f64,
    pub energy_deviation: f64,
    pub energy_samples: Vec<f64>,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    /// λ′, the integrand `|Ẋ + F′(X)|²` itself.
    pub lambda_dot: Vec<f64>,
    /// λ″ by high-order differences of λ′.
    pub lambda_ddot: Vec<f64>,
}

impl ToyDiagnostics {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty time grid")
    }

    /// CSV columns: t, X components, Ẋ components, E, λ, Φ, λ′.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.states[0].len();
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=d).map(|k| format!("x_{k}")));
        header.extend((1..=d).map(|k| format!("xdot_{k}")));
        header.extend(["energy", "lambda", "phi", "lambda_prime"].map(String::from));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..self.times.len()).map(|j| {
            let mut row = vec![self.times[j]];
            row.extend(&self.states[j]);
            row.extend(&self.velocities[j]);
            row.extend([self.energy_samples[j], self.lambda[j], self.phi[j], self.lambda_dot[j]]);
            row
        });
        write_csv(path, &header, rows)
    }
}

/// Computes λ by cumulative quadrature of `|Ẋ + F′(X)|²`, and Φ.
pub fn lambda_curve(model: &dyn FModel, path: &ToyPath) -> ToyDiagnostics {
    let lambda_dot: Vec<f64> = path
        .states
        .iter()
        .zip(&path.velocities)
        .map(|(x, v)| {
            let g = model.gradient(x);
            v.iter().zip(&g).map(|(a, b)| (a + b) * (a + b)).sum()
        })
        .collect();
    let lambda = cumulative_integral(&lambda_dot, path.step(), true);
    let lambda_ddot = Stencil::new(&path.times, 1, DERIV_STENCIL.min(path.times.len())).apply(&lambda_dot);
    let (energy, energy_deviation) = path_energy(model, path);
    let phi = lambda.iter().zip(&path.times).map(|(l, t)| l - t * energy).collect();
    ToyDiagnostics {
        times: path.times.clone(),
        states: path.states.clone(),
        velocities: path.velocities.clone(),
        cost: path_cost(model, path),
        energy,
        energy_deviation,
        energy_samples: energy_samples(model, path),
        lambda,
        phi,
        lambda_dot,
        lambda_ddot,
    }
}

/// Evaluates the toy inequalities for the given curvature mode.
///
/// The path's states must pass the convexity certificate for `mode`,
/// otherwise the check is refused. Reports whose name ends in `_literal`
/// carry the alternative coefficient/endpoint reading and are informational.
pub fn check_toy_inequalities(
    model: &dyn FModel,
    path: &ToyPath,
    mode: CurvatureMode,
) -> Result<Vec<InequalityReport>> {
    let cert = certify_convexity(model, mode, &path.states)?;
    if !cert.pass {
        return Err(Error::Refused(format!(
            "{} is not {} along the path: smallest eigenvalue {:e} at node {:?}",
            model.name(),
            mode.label(),
            cert.slack,
            cert.location
        )));
    }
    let diag = lambda_curve(model, path);
    let t_end = path.horizon;
    let m = path.intervals();
    let meta = ReportMeta::default().horizon(t_end).with_mode(mode);
    let lam_t = diag.lambda[m];
    let ld0 = diag.lambda_dot[0];
    let ldt = diag.lambda_dot[m];
    let tol = TOY_TOLERANCE;
    let mut out = Vec::new();
    let push = |out: &mut Vec<InequalityReport>, r: InequalityReport| out.push(r.with_meta(meta.clone()));

    match mode {
        CurvatureMode::RhoInfinity { rho } => {
            let c = lsi_coefficient(rho, t_end);
            let c_rev = reverse_lsi_coefficient(rho, t_end);
            push(&mut out, InequalityReport::integrated("toy_gradient_commutation", ld0, (-2.0 * rho * t_end).exp() * ldt, tol));
            push(&mut out, InequalityReport::integrated("toy_lsi", lam_t, c * ldt, tol));
            push(&mut out, InequalityReport::integrated("toy_reverse_lsi", c_rev * ld0, lam_t, tol));
            push(&mut out, InequalityReport::integrated("toy_lsi_literal", lam_t, c / t_end * ldt, tol).informational());
            push(&mut out, InequalityReport::integrated("toy_reverse_lsi_literal", c_rev / t_end * ld0, lam_t, tol).informational());

            let mut worst: Option<InequalityReport> = None;
            for j in 1..m {
                let scale = diag.lambda_dot[j].abs().max(1.0);
                let r = InequalityReport::new(
                    "toy_lambda_convexity",
                    Location::Point(j),
                    2.0 * rho * diag.lambda_dot[j],
                    diag.lambda_ddot[j],
                    tol * scale,
                );
                if worst.as_ref().is_none_or(|w| r.slack / r.tolerance < w.slack / w.tolerance) {
                    worst = Some(r);
                }
            }
            push(&mut out, worst.expect("path has interior nodes"));
        }
        CurvatureMode::ZeroN { dim: n } => {
            let e = diag.energy;
            let phi_t = diag.phi[m];
            let dphi0 = ld0 - e;
            let dphit = ldt - e;
            push(&mut out, InequalityReport::integrated("toy_dim_lsi", (phi_t / (2.0 * n)).exp(), 1.0 + t_end * dphit / (2.0 * n), tol));
            push(&mut out, InequalityReport::integrated("toy_dim_reverse_lsi", (-phi_t / (2.0 * n)).exp(), 1.0 - t_end * dphi0 / (2.0 * n), tol));
            push(&mut out, InequalityReport::integrated("toy_energy_upper", e, 2.0 * n / t_end + ldt, tol));
            push(&mut out, InequalityReport::integrated("toy_energy_lower", -2.0 * n / t_end + ld0, e, tol));
            push(&mut out, InequalityReport::integrated("toy_energy_upper_literal", e, 2.0 * n / t_end + ld0, tol).informational());
            push(&mut out, InequalityReport::integrated("toy_energy_lower_literal", -2.0 * n / t_end + ldt, e, tol).informational());

            let mut worst: Option<InequalityReport> = None;
            for j in 1..m {
                let psi = (-diag.phi[j] / (2.0 * n)).exp();
                let dphi = diag.lambda_dot[j] - e;
                let curvature = psi * dphi * dphi / (4.0 * n * n);
                let bending = psi * diag.lambda_ddot[j] / (2.0 * n);
                let r = InequalityReport::new(
                    "toy_exp_concavity",
                    Location::Point(j),
                    curvature,
                    bending,
                    tol * bending.abs().max(curvature.abs()).max(1.0),
                );
                if worst.as_ref().is_none_or(|w| r.slack / r.tolerance < w.slack / w.tolerance) {
                    worst = Some(r);
                }
            }
            push(&mut out, worst.expect("path has interior nodes"));
        }
    }
    Ok(out)
}

/// Smallest `cost(perturbed) − cost(path)` over `count` random smooth
/// perturbations with fixed endpoints, drawn from a SplitMix64 stream seeded
/// with `seed`. A minimizing path gives a value ≥ 0 up to discretization error.
pub fn minimality_gap(model: &dyn FModel, path: &ToyPath, count: usize, seed: u64) -> Result<f64> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let base = path_cost(model, path);
    let t_end = path.horizon;
    let d = path.dim();
    let span = path.states.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3);
    let mut gap = f64::INFINITY;
    for _ in 0..count {
        let coeffs: Vec<Vec<f64>> = (0..PERTURBATION_MODES)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut amplitude = 0.1 * span * rng.random_range(0.05..1.0);
        let perturbed = loop {
            let states: Vec<Vec<f64>> = path
                .times
                .iter()
                .zip(&path.states)
                .map(|(&t, s)| {
                    (0..d)
                        .map(|k| {
                            let bump: f64 = coeffs
                                .iter()
                                .enumerate()
                                .map(|(mode, c)| c[k] * ((mode + 1) as f64 * std::f64::consts::PI * t / t_end).sin())
                                .sum();
                            s[k] + amplitude * bump
                        })
                        .collect()
                })
                .collect();
            if states.iter().all(|s| model.in_domain(s)) {
                break states;
            }
            amplitude *= 0.5;
            if amplitude < 1e-12 {
                return Err(Error::Domain("perturbations cannot stay in the domain".into()));
            }
        };
        let p = ToyPath::from_states(t_end, perturbed)?;
        gap = gap.min(path_cost(model, &p) - base);
    }
    Ok(gap)
}
