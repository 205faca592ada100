use log::debug;
use nalgebra::{DMatrix, DVector};

use super::FModel;
use crate::error::{Error, Result};
use crate::numerics::Stencil;

/// Largest accepted residual of the discrete Newton system.
pub const BVP_RESIDUAL_TOL: f64 = 1e-10;

const MIN_INTERVALS: usize = 32;
const MAX_NEWTON: usize = 100;
const VELOCITY_STENCIL: usize = 9;

/// A time-sampled curve on `[0, T]` with uniformly spaced nodes.
#[derive(Debug, Clone)]
pub struct ToyPath {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Newton iterations used (0 for paths not produced by the solver).
    pub iterations: usize,
    /// Sup-norm residual of the discrete system at the returned path.
    pub residual: f64,
}

impl ToyPath {
    /// Builds a path from its states, differentiating with an eighth-order
    /// stencil.
    pub fn from_states(horizon: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() < VELOCITY_STENCIL {
            return Err(Error::Domain(format!(
                "a path needs at least {VELOCITY_STENCIL} nodes, got {}",
                states.len()
            )));
        }
        let m = states.len() - 1;
        let times: Vec<f64> = (0..=m).map(|j| horizon * j as f64 / m as f64).collect();
        let d = states[0].len();
        let stencil = Stencil::new(&times, 1, VELOCITY_STENCIL);
        let mut velocities = vec![vec![0.0; d]; m + 1];
        for k in 0..d {
            let comp: Vec<f64> = states.iter().map(|s| s[k]).collect();
            if comp.iter().all(|&c| c == comp[0]) {
                continue;
            }
            for (j, v) in stencil.apply(&comp).into_iter().enumerate() {
                velocities[j][k] = v;
            }
        }
        Ok(ToyPath {
            horizon,
            times,
            states,
            velocities,
            iterations: 0,
            residual: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    /// The same curve run backwards, `t ↦ X(T − t)`.
    pub fn reversed(&self) -> ToyPath {
        let mut states = self.states.clone();
        states.reverse();
        let mut velocities: Vec<Vec<f64>> = self
            .velocities
            .iter()
            .map(|v| v.iter().map(|c| -c).collect())
            .collect();
        velocities.reverse();
        ToyPath {
            states,
            velocities,
            ..self.clone()
        }
    }
}

fn residual(model: &dyn FModel, x: &[Vec<f64>], h2: f64) -> (Vec<DVector<f64>>, f64) {
    let m = x.len() - 1;
    let acc: Vec<Vec<f64>> = x.iter().map(|s| model.acceleration(s)).collect();
    let d = x[0].len();
    let mut out = Vec::with_capacity(m - 1);
    let mut sup: f64 = 0.0;
    for j in 1..m {
        let r = DVector::from_fn(d, |k, _| {
            x[j + 1][k] - 2.0 * x[j][k] + x[j - 1][k]
                - h2 / 12.0 * (acc[j + 1][k] + 10.0 * acc[j][k] + acc[j - 1][k])
        });
        sup = sup.max(r.amax());
        out.push(r);
    }
    (out, sup)
}

fn singular() -> Error {
    Error::Numerical("singular Jacobian block in the Newton solve".into())
}

/// Solves `J δ = −r` for the block-tridiagonal Newton Jacobian.
fn block_thomas(
    sub: &[DMatrix<f64>],
    diag: &[DMatrix<f64>],
    sup: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let k = diag.len();
    let mut cp: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    let mut dp: Vec<DVector<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let (m, r) = if i == 0 {
            (diag[0].clone(), -&rhs[0])
        } else {
            (&diag[i] - &sub[i] * &cp[i - 1], -&rhs[i] - &sub[i] * &dp[i - 1])
        };
        let lu = m.lu();
        cp.push(lu.solve(&sup[i]).ok_or_else(singular)?);
        dp.push(lu.solve(&r).ok_or_else(singular)?);
    }
    let mut out = dp.clone();
    for i in (0..k - 1).rev() {
        out[i] = &dp[i] - &cp[i] * &out[i + 1];
    }
    Ok(out)
}

/// Solves Newton's system `Ẍ = F″(X)F′(X)`, `X(0) = x`, `X(T) = y` on `m`
/// uniform intervals.
///
/// The equation is discretized with Numerov's fourth-order scheme and solved
/// by damped Newton iteration started from the straight line.
pub fn solve_newton_bvp(
    model: &dyn FModel,
    x: &[f64],
    y: &[f64],
    horizon: f64,
    m: usize,
) -> Result<ToyPath> {
    let d = model.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::Domain(format!("endpoints must have dimension {d}")));
    }
    if !(model.in_domain(x) && model.in_domain(y)) {
        return Err(Error::Domain(format!(
            "endpoints {x:?} and {y:?} must lie in the domain of {}",
            model.name()
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if m < MIN_INTERVALS {
        return Err(Error::Domain(format!("need at least {MIN_INTERVALS} intervals, got {m}")));
    }
    let h = horizon / m as f64;
    let h2 = h * h;
    let mut states: Vec<Vec<f64>> = (0..=m)
        .map(|j| {
            let s = j as f64 / m as f64;
            (0..d).map(|k| x[k] + s * (y[k] - x[k])).collect()
        })
        .collect();
    if let Some(j) = states.iter().position(|s| !model.in_domain(s)) {
        return Err(Error::Domain(format!("initial straight line leaves the domain at node {j}")));
    }
    let (mut r, mut norm) = residual(model, &states, h2);
    let mut iterations = 0;
    let eye = DMatrix::<f64>::identity(d, d);
    while iterations < MAX_NEWTON && norm > 1e-14 {
        iterations += 1;
        let jac: Vec<DMatrix<f64>> = states.iter().map(|s| model.acceleration_jacobian(s)).collect();
        let c = h2 / 12.0;
        let sub: Vec<DMatrix<f64>> = (1..m).map(|j| &eye - &jac[j - 1] * c).collect();
        let diag: Vec<DMatrix<f64>> = (1..m).map(|j| &eye * -2.0 - &jac[j] * (10.0 * c)).collect();
        let sup: Vec<DMatrix<f64>> = (1..m).map(|j| &eye - &jac[j + 1] * c).collect();
        let delta = block_thomas(&sub, &diag, &sup, &r)?;
        let step_size = delta.iter().map(|v| v.amax()).fold(0.0, f64::max);

        let mut alpha = 1.0;
        let mut accepted = false;
        let mut left_domain = false;
        while alpha > 1e-10 {
            let trial: Vec<Vec<f64>> = states
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    if j == 0 || j == m {
                        s.clone()
                    } else {
                        (0..d).map(|k| s[k] + alpha * delta[j - 1][k]).collect()
                    }
                })
                .collect();
            if trial.iter().all(|s| model.in_domain(s)) {
                let (tr, tn) = residual(model, &trial, h2);
                if tn < norm || tn <= 1e-14 {
                    states = trial;
                    r = tr;
                    norm = tn;
                    accepted = true;
                    break;
                }
            } else {
                left_domain = true;
            }
            alpha *= 0.5;
        }
        debug!("newton iteration {iterations}: residual {norm:e}, step {step_size:e}, damping {alpha}");
        if !accepted {
            if left_domain && norm > BVP_RESIDUAL_TOL {
                return Err(Error::Domain(format!(
                    "Newton iterate left the domain of {} at iteration {iterations}",
                    model.name()
                )));
            }
            break;
        }
        let scale = states.iter().map(|s| s.iter().fold(0.0f64, |a, v| a.max(v.abs()))).fold(1.0, f64::max);
        if step_size * alpha <= 1e-15 * scale {
            break;
        }
    }
    if norm > BVP_RESIDUAL_TOL {
        return Err(Error::NoConvergence {
            solver: "Newton BVP",
            iterations,
            residual: norm,
        });
    }
    let mut path = ToyPath::from_states(horizon, states)?;
    path.iterations = iterations;
    path.residual = norm;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sup_distance;
    use crate::toy::{NegLog, Quadratic, ZeroPotential};

    #[test]
    fn zero_potential_gives_straight_line() {
        let p = solve_newton_bvp(&ZeroPotential { dim: 2 }, &[0.0, 1.0], &[2.0, -1.0], 2.0, 64).unwrap();
        for (t, s) in p.times.iter().zip(&p.states) {
            assert!((s[0] - t).abs() < 1e-14 && (s[1] - (1.0 - t)).abs() < 1e-14);
        }
        for v in &p.velocities {
            assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_matches_hyperbolic_solution() {
        let rho: f64 = 1.5;
        let (x, y, t_end) = (0.3, -0.4, 1.2);
        let p = solve_newton_bvp(&Quadratic { rho, dim: 1 }, &[x], &[y], t_end, 256).unwrap();
        // X = a e^{ρt} + b e^{−ρt}
        let e = (rho * t_end).exp();
        let a = (y - x / e) / (e - 1.0 / e);
        let b = x - a;
        let exact: Vec<f64> = p.times.iter().map(|t| a * (rho * t).exp() + b * (-rho * t).exp()).collect();
        let got: Vec<f64> = p.states.iter().map(|s| s[0]).collect();
        assert!(sup_distance(&got, &exact) < 1e-8);
        assert!(p.residual <= BVP_RESIDUAL_TOL);
    }

    #[test]
    fn symmetric_neglog_path() {
        let p = solve_newton_bvp(&NegLog { n: 1.0 }, &[1.0], &[1.0], 1.0, 128).unwrap();
        let m = p.intervals();
        for j in 0..=m {
            assert!((p.states[j][0] - p.states[m - j][0]).abs() < 1e-8);
        }
        assert!(p.states[m / 2][0] > 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_newton_bvp(&NegLog { n: 1.0 }, &[-1.0], &[1.0], 1.0, 64).is_err());
        assert!(solve_newton_bvp(&NegLog { n: 1.0 }, &[1.0], &[1.0], 0.0, 64).is_err());
        assert!(solve_newton_bvp(&NegLog { n: 1.0 }, &[1.0], &[1.0], 1.0, 8).is_err());
    }
}
