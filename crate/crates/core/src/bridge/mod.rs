//! Entropic interpolations on a grid manifold.
//!
//! The Schrödinger system is solved by iterative proportional fitting; a pair
//! of potentials `(f, g)` then defines the path `t ↦ P_t f · P_{T−t} g dx`.
//! Along it we sample the velocity cost `|μ̇ₜ + grad F|²`, the entropic cost
//! and the conserved energy, and evaluate the curvature estimates between its
//! endpoint quantities.

mod diagnostics;

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    apply_generator, entropy, gamma, gamma_sq, heat_apply, integrate, Density, GridManifold,
    HeatOperator, ScalarField,
};
use crate::numerics::simpson;

pub use diagnostics::{
    bridge_diagnostics, bridge_reports, check_bridge_inequalities, conserved_energy,
    entropic_cost, BridgeDiagnostics, BridgeQuantities, CostEstimate, EnergyEstimate, PathSample,
    BRIDGE_TOLERANCE, COST_AGREEMENT, ENERGY_DEVIATION_TOLERANCE, ENERGY_SAMPLES,
};

/// Largest accepted drift of the path mass away from 1.
pub const MASS_DRIFT_TOLERANCE: f64 = 1e-10;

/// Initial node count of the time quadrature.
pub const TIME_NODES: usize = 33;

/// Node doubling stops once the integral changes by less than this (relative
/// to `max(1, |Λ|)`).
pub const REFINEMENT_TOLERANCE: f64 = 1e-7;

const MAX_TIME_NODES: usize = 4097;

/// How the multiplicative constant of the potentials was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `∫ f dx = ∫ g dx`.
    EqualIntegrals,
    /// Arbitrary potentials; the path is divided by `∫ f P_T g dx`.
    PathMass,
}

/// Solution `(f, g)` of the Schrödinger system `f·P_T g = μ`, `g·P_T f = ν`.
#[derive(Debug, Clone)]
pub struct SchrodingerPotentials<'m> {
    manifold: &'m GridManifold,
    pub horizon: f64,
    pub f: ScalarField,
    pub g: ScalarField,
    pub iterations: usize,
    /// Sup-norm marginal residuals at t = 0 and t = T.
    pub residuals: [f64; 2],
    /// Larger of the two residuals after each iteration.
    pub history: Vec<f64>,
    pub normalization: Normalization,
}

impl<'m> SchrodingerPotentials<'m> {
    pub fn manifold(&self) -> &'m GridManifold {
        self.manifold
    }

    /// The entropic interpolation these potentials generate.
    pub fn path(&self) -> Result<EntropicPath<'m>> {
        product_path(self.manifold, &self.f, &self.g, self.horizon)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("horizon must be positive and finite, got {horizon}")))
    }
}

fn logs(field: &ScalarField, what: &str, iteration: usize) -> Result<Vec<f64>> {
    if let Some((i, v)) = field.first_nonpositive() {
        return Err(Error::Numerical(format!(
            "zero denominator: {what} is {v:e} at point {i} in iteration {iteration}"
        )));
    }
    Ok(field.iter().map(|v| v.ln()).collect())
}

fn sup_residual(pot: &[f64], heat: &[f64], target: &[f64]) -> f64 {
    pot.iter()
        .zip(heat)
        .zip(target)
        .map(|((p, h), t)| (p * h - t).abs())
        .fold(0.0, f64::max)
}

/// Iterative proportional fitting for the Schrödinger system between two
/// strictly positive densities.
///
/// Updates alternate `f ← μ / P_T g` and `g ← ν / P_T f` in log form. Once the
/// residual increases, later updates move only halfway towards their target.
/// The result is scaled so that `∫ f dx = ∫ g dx`.
pub fn ipfp_solve<'m>(
    m: &'m GridManifold,
    horizon: f64,
    mu: &Density,
    nu: &Density,
    tol: f64,
    max_iter: usize,
) -> Result<SchrodingerPotentials<'m>> {
    check_horizon(horizon)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("IPFP tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Domain("IPFP needs at least one iteration".into()));
    }
    for d in [mu, nu] {
        if d.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                got: d.len(),
            });
        }
    }
    mu.field().require_positive("initial density")?;
    nu.field().require_positive("final density")?;

    let op = m.heat_operator(horizon)?;
    let log_mu: Vec<f64> = mu.iter().map(|v| v.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|v| v.ln()).collect();
    let n = m.len();
    let mut log_f = vec![0.0; n];
    let mut log_g = vec![0.0; n];
    let mut pg = m.constant(1.0);
    let mut damping = 1.0;
    let mut history: Vec<f64> = Vec::new();
    let mut residuals = [f64::INFINITY; 2];

    for it in 1..=max_iter {
        let lpg = logs(&pg, "P_T g", it)?;
        for i in 0..n {
            log_f[i] += damping * (log_mu[i] - lpg[i] - log_f[i]);
        }
        let f = ScalarField::new(log_f.iter().map(|v| v.exp()).collect())?;
        let pf = op.apply(&f)?;
        let lpf = logs(&pf, "P_T f", it)?;
        for i in 0..n {
            log_g[i] += damping * (log_nu[i] - lpf[i] - log_g[i]);
        }
        let g = ScalarField::new(log_g.iter().map(|v| v.exp()).collect())?;
        pg = op.apply(&g)?;

        residuals = [sup_residual(&f, &pg, mu), sup_residual(&g, &pf, nu)];
        let r = residuals[0].max(residuals[1]);
        debug!("ipfp iteration {it}: residuals {:e}, {:e}", residuals[0], residuals[1]);
        if history.last().is_some_and(|&prev| r > prev) && damping == 1.0 {
            debug!("ipfp residual increased at iteration {it}; damping updates");
            damping = 0.5;
        }
        history.push(r);
        if r <= tol {
            let c = (integrate(m, &g)? / integrate(m, &f)?).sqrt();
            return Ok(SchrodingerPotentials {
                manifold: m,
                horizon,
                f: f.map(|v| v * c),
                g: g.map(|v| v / c),
                iterations: it,
                residuals,
                history,
                normalization: Normalization::EqualIntegrals,
            });
        }
    }
    warn!(
        "ipfp stopped after {max_iter} iterations with residuals {:e} (t = 0), {:e} (t = T)",
        residuals[0], residuals[1]
    );
    Err(Error::NoConvergence {
        solver: "IPFP",
        iterations: max_iter,
        residual: residuals[0].max(residuals[1]),
    })
}

/// `t ↦ P_t f · P_{T−t} g dx / ∫ f P_T g dx`, the entropic interpolation
/// generated by an arbitrary pair of potentials.
#[derive(Debug, Clone)]
pub struct EntropicPath<'m> {
    manifold: &'m GridManifold,
    horizon: f64,
    f: ScalarField,
    g: ScalarField,
    mass: f64,
    time_nodes: usize,
}

/// Builds the normalized product path. `f` may vanish on part of the space
/// (bumps narrower than the floating-point range) but must be nonnegative with
/// positive mass; `g` must be strictly positive.
pub fn product_path<'m>(
    m: &'m GridManifold,
    f: &ScalarField,
    g: &ScalarField,
    horizon: f64,
) -> Result<EntropicPath<'m>> {
    check_horizon(horizon)?;
    let f = m.field(f.to_vec())?;
    let g = m.field(g.to_vec())?;
    if let Some(i) = f.iter().position(|&v| v < 0.0) {
        return Err(Error::NonPositive {
            what: "potential f",
            index: i,
            value: f[i],
        });
    }
    g.require_positive("potential g")?;
    let pg = heat_apply(m, horizon, &g)?;
    let mass = integrate(m, &f.zip_map(&pg, |a, b| a * b))?;
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::Numerical("potential f has zero mass".into()));
    }
    Ok(EntropicPath {
        manifold: m,
        horizon,
        f,
        g,
        mass,
        time_nodes: TIME_NODES,
    })
}

/// The interpolation between `δ_y` and `ν`: `t ↦ p_t^y · P_{T−t}(ν / p_T^y) dx`.
pub fn dirac_bridge<'m>(
    m: &'m GridManifold,
    y: usize,
    nu: &Density,
    horizon: f64,
) -> Result<EntropicPath<'m>> {
    check_horizon(horizon)?;
    nu.field().require_positive("final density")?;
    let column = m.heat_column(y, horizon)?;
    if let Some((i, v)) = column.first_nonpositive() {
        return Err(Error::Numerical(format!(
            "heat kernel column p_T^y vanishes at point {i} ({v:e})"
        )));
    }
    let g = nu.field().zip_map(&column, |a, b| a / b);
    let mut delta = vec![0.0; m.len()];
    delta[y] = 1.0 / m.weights()[y];
    product_path(m, &m.field(delta)?, &g, horizon)
}

/// `P_t f · P_{T−t} g` at one time, with the two factors kept apart.
struct Slice {
    forward: ScalarField,
    backward: ScalarField,
}

impl<'m> EntropicPath<'m> {
    pub fn manifold(&self) -> &'m GridManifold {
        self.manifold
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn g(&self) -> &ScalarField {
        &self.g
    }

    /// Normalizing constant `∫ f P_T g dx`.
    pub fn normalization(&self) -> f64 {
        self.mass
    }

    /// Sets the initial node count of the time quadrature (odd, at least 5).
    pub fn with_time_nodes(mut self, nodes: usize) -> Result<Self> {
        if nodes < 5 || nodes.is_multiple_of(2) || nodes > MAX_TIME_NODES {
            return Err(Error::Domain(format!(
                "time nodes must be odd and within [5, {MAX_TIME_NODES}], got {nodes}"
            )));
        }
        self.time_nodes = nodes;
        Ok(self)
    }

    /// The same interpolation run backwards (potentials swapped).
    pub fn reversed(&self) -> EntropicPath<'m> {
        EntropicPath {
            f: self.g.clone(),
            g: self.f.clone(),
            ..self.clone()
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)))
        }
    }

    fn slice(&self, t: f64) -> Result<Slice> {
        self.check_time(t)?;
        Ok(Slice {
            forward: heat_apply(self.manifold, t, &self.f)?,
            backward: heat_apply(self.manifold, self.horizon - t, &self.g)?,
        })
    }

    fn slice_with(&self, forward: &HeatOperator, backward: &HeatOperator) -> Result<Slice> {
        Ok(Slice {
            forward: forward.apply(&self.f)?,
            backward: backward.apply(&self.g)?,
        })
    }

    fn mass_of(&self, s: &Slice) -> Result<f64> {
        Ok(integrate(self.manifold, &s.forward.zip_map(&s.backward, |a, b| a * b))? / self.mass)
    }

    /// `∫ μₜ`, which equals 1 up to discretization error.
    pub fn mass_at(&self, t: f64) -> Result<f64> {
        let s = self.slice(t)?;
        self.mass_of(&s)
    }

    /// The density `μₜ`, renormalized; the mass drift is logged.
    pub fn density(&self, t: f64) -> Result<Density> {
        let s = self.slice(t)?;
        let mass = self.mass_of(&s)?;
        if (mass - 1.0).abs() > MASS_DRIFT_TOLERANCE {
            warn!("path mass drift {:e} at t = {t}", mass - 1.0);
        } else {
            debug!("path mass drift {:e} at t = {t}", mass - 1.0);
        }
        Density::normalized(self.manifold, s.forward.zip_map(&s.backward, |a, b| a * b).into_vec())
    }

    fn velocity_cost_of(&self, s: &Slice) -> Result<f64> {
        let a = &s.backward;
        a.require_positive("P_{T-t} g")?;
        let ga = gamma_sq(self.manifold, a)?;
        let integrand: Vec<f64> = (0..a.len()).map(|i| ga[i] / a[i] * s.forward[i]).collect();
        Ok(4.0 * integrate(self.manifold, &integrand)? / self.mass)
    }

    /// `|μ̇ₜ + grad F|²` as `4∫ Γ(P_{T−t}g)/P_{T−t}g · P_t f dx`.
    pub fn velocity_cost(&self, t: f64) -> Result<f64> {
        let s = self.slice(t)?;
        self.velocity_cost_of(&s)
    }

    /// The same quantity from the velocity field and the entropy gradient,
    /// `∫ Γ(log(a/b) + log(ab)) ab dx` with `a = P_{T−t}g`, `b = P_t f`.
    /// Needs `P_t f > 0`.
    pub fn velocity_cost_direct(&self, t: f64) -> Result<f64> {
        let s = self.slice(t)?;
        s.forward.require_positive("P_t f")?;
        s.backward.require_positive("P_{T-t} g")?;
        let (a, b) = (&s.backward, &s.forward);
        let u = a.zip_map(b, |x, y| (x.ln() - y.ln()) + (x.ln() + y.ln()));
        let gu = gamma_sq(self.manifold, &u)?;
        let integrand: Vec<f64> = (0..a.len()).map(|i| gu[i] * a[i] * b[i]).collect();
        Ok(integrate(self.manifold, &integrand)? / self.mass)
    }

    fn energy_of(&self, s: &Slice) -> Result<f64> {
        let (a, b) = (&s.backward, &s.forward);
        if b.first_nonpositive().is_some() {
            return self.energy_cross_of(s);
        }
        let m = self.manifold;
        let velocity = gamma_sq(m, &a.zip_map(b, |x, y| x.ln() - y.ln()))?;
        let slope = gamma_sq(m, &a.zip_map(b, |x, y| x.ln() + y.ln()))?;
        let integrand: Vec<f64> = (0..a.len()).map(|i| (velocity[i] - slope[i]) * a[i] * b[i]).collect();
        Ok(integrate(m, &integrand)? / self.mass)
    }

    fn energy_cross_of(&self, s: &Slice) -> Result<f64> {
        let cross = gamma(self.manifold, &s.backward, &s.forward)?;
        Ok(-4.0 * integrate(self.manifold, &cross)? / self.mass)
    }

    /// `|μ̇ₜ|² − Γ(F)(μₜ)`, each term by quadrature. Where `P_t f` vanishes
    /// somewhere the polarized form `−4∫ Γ(P_{T−t}g, P_t f) dx` is used.
    pub fn energy_sample(&self, t: f64) -> Result<f64> {
        let s = self.slice(t)?;
        self.energy_of(&s)
    }

    /// `−4∫ Γ(P_{T−t}g, P_t f) dx`.
    pub fn energy_cross(&self, t: f64) -> Result<f64> {
        let s = self.slice(t)?;
        self.energy_cross_of(&s)
    }

    /// `4∫ L(P_T g) f dx`, the energy as a single integral.
    pub fn energy(&self) -> Result<f64> {
        let m = self.manifold;
        let lpg = apply_generator(m, &heat_apply(m, self.horizon, &self.g)?)?;
        Ok(4.0 * integrate(m, &lpg.zip_map(&self.f, |a, b| a * b))? / self.mass)
    }

    /// `Λ = 4∫ [P_T(g log g) − P_T g log P_T g] f dx`.
    pub fn lambda_closed_form(&self) -> Result<f64> {
        let m = self.manifold;
        let op = m.heat_operator(self.horizon)?;
        let pg = op.apply(&self.g)?;
        let pglog = op.apply(&self.g.map(|v| v * v.ln()))?;
        let bracket: Vec<f64> = (0..pg.len())
            .map(|i| (pglog[i] - pg[i] * pg[i].ln()) * self.f[i])
            .collect();
        Ok(4.0 * integrate(m, &bracket)? / self.mass)
    }

    /// Entropies of the two endpoints.
    pub fn endpoint_entropies(&self) -> Result<(f64, f64)> {
        Ok((
            entropy(self.manifold, &self.density(0.0)?)?,
            entropy(self.manifold, &self.density(self.horizon)?)?,
        ))
    }

    /// Velocity costs at the requested node indices of a uniform grid with
    /// `intervals` intervals. Nodes `j` and `intervals − j` share their two
    /// heat operators.
    fn velocity_at_nodes(&self, intervals: usize, wanted: &[usize]) -> Result<BTreeMap<usize, f64>> {
        let time = |j: usize| self.horizon * (j as f64 / intervals as f64);
        let mut out = BTreeMap::new();
        for &j in wanted {
            if out.contains_key(&j) {
                continue;
            }
            let k = intervals - j;
            let op_j = self.manifold.heat_operator(time(j))?;
            let op_k = self.manifold.heat_operator(time(k))?;
            out.insert(j, self.velocity_cost_of(&self.slice_with(&op_j, &op_k)?)?);
            if k != j && wanted.contains(&k) {
                out.insert(k, self.velocity_cost_of(&self.slice_with(&op_k, &op_j)?)?);
            }
        }
        Ok(out)
    }

    /// `Λ = ∫₀ᵀ |μ̇ₜ + grad F|² dt` by composite Simpson, doubling the node
    /// count from [`TIME_NODES`] (see [`Self::with_time_nodes`]) until
    /// successive estimates agree within [`REFINEMENT_TOLERANCE`]. Returns
    /// the estimate and the node count.
    pub fn lambda_quadrature(&self) -> Result<(f64, usize)> {
        let mut intervals = self.time_nodes - 1;
        let all: Vec<usize> = (0..=intervals).collect();
        let mut values: Vec<f64> = self.velocity_at_nodes(intervals, &all)?.into_values().collect();
        let mut estimate = simpson(&values, self.horizon / intervals as f64);
        loop {
            let fine = 2 * intervals;
            if fine + 1 > MAX_TIME_NODES {
                return Err(Error::NoConvergence {
                    solver: "time quadrature",
                    iterations: intervals + 1,
                    residual: estimate,
                });
            }
            let odd: Vec<usize> = (1..fine).step_by(2).collect();
            let new = self.velocity_at_nodes(fine, &odd)?;
            let refined: Vec<f64> = (0..=fine)
                .map(|j| if j % 2 == 0 { values[j / 2] } else { new[&j] })
                .collect();
            let next = simpson(&refined, self.horizon / fine as f64);
            let change = (next - estimate).abs();
            debug!("time quadrature: {} nodes, Λ = {next}, change {change:e}", fine + 1);
            values = refined;
            intervals = fine;
            estimate = next;
            if change < REFINEMENT_TOLERANCE * estimate.abs().max(1.0) {
                return Ok((estimate, intervals + 1));
            }
        }
    }
}
