//! Pointwise local inequalities of the heat semigroup under CD(ρ, ∞) and
//! CD(0, n), and the delta-limit experiments comparing them with the bridge
//! inequalities.
//!
//! Throughout, `u = P_T g`, `Ent = P_T(g log g) − u log u` and
//! `A = P_T(Γ(g)/g)`.

mod delta;

use crate::error::{Error, Result};
use crate::grid::{apply_generator, gamma_sq, GridManifold, ScalarField};
use crate::numerics::{lsi_coefficient, reverse_lsi_coefficient};
use crate::report::{CurvatureMode, PointwiseProfile, ReportMeta};

pub use delta::{delta_limit_bridge_vs_local, DeltaLimitRecord, LocalPair, MIN_POINTS_ACROSS};

/// Relative pointwise tolerance of the local inequalities.
pub const LOCAL_TOLERANCE: f64 = 1e-8;

/// How the dimensional inequalities read the entropy bracket.
pub const BRACKET_READING: &str =
    "bracket read as P_T(g log g) - P_T g log P_T g - T L P_T g with L the generator";

/// The fields every local inequality is built from.
pub(crate) struct LocalFields {
    pub u: ScalarField,
    pub lu: ScalarField,
    /// `Γ(u)/u`.
    pub grad_ratio: ScalarField,
    pub ent: ScalarField,
    pub a: ScalarField,
}

pub(crate) fn local_fields(m: &GridManifold, g: &ScalarField, horizon: f64) -> Result<LocalFields> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive and finite, got {horizon}")));
    }
    let g = m.field(g.to_vec())?;
    g.require_positive("g")?;
    let op = m.heat_operator(horizon)?;
    let u = op.apply(&g)?;
    u.require_positive("P_T g")?;
    let plog = op.apply(&g.map(|v| v * v.ln()))?;
    let ent = plog.zip_map(&u, |p, v| p - v * v.ln());
    let gg = gamma_sq(m, &g)?;
    let a = op.apply(&gg.zip_map(&g, |a, b| a / b))?;
    let grad_ratio = gamma_sq(m, &u)?.zip_map(&u, |a, b| a / b);
    let lu = apply_generator(m, &u)?;
    Ok(LocalFields {
        u,
        lu,
        grad_ratio,
        ent,
        a,
    })
}

fn profile(
    m: &GridManifold,
    name: &str,
    mode: CurvatureMode,
    horizon: f64,
    lhs: impl Fn(usize) -> f64,
    rhs: impl Fn(usize) -> f64,
) -> PointwiseProfile {
    let points = m.interior();
    PointwiseProfile {
        name: name.to_owned(),
        lhs: points.iter().map(|&i| lhs(i)).collect(),
        rhs: points.iter().map(|&i| rhs(i)).collect(),
        points,
        rel_tol: LOCAL_TOLERANCE,
        informational: false,
        meta: ReportMeta::default().with_mode(mode).horizon(horizon),
    }
}

fn rho_mode(m: &GridManifold, rho: f64) -> Result<CurvatureMode> {
    let mode = CurvatureMode::RhoInfinity { rho };
    m.require_mode(mode)?;
    Ok(mode)
}

fn dim_mode(m: &GridManifold, n: f64) -> Result<CurvatureMode> {
    let mode = CurvatureMode::ZeroN { dim: n };
    m.require_mode(mode)?;
    Ok(mode)
}

/// `Γ(P_T g)/P_T g ≤ e^{−2ρT} P_T(Γ(g)/g)`.
pub fn eval_grad_commutation(m: &GridManifold, rho: f64, g: &ScalarField, horizon: f64) -> Result<PointwiseProfile> {
    let mode = rho_mode(m, rho)?;
    let lf = local_fields(m, g, horizon)?;
    Ok(grad_commutation_profile(m, mode, rho, horizon, &lf))
}

fn grad_commutation_profile(m: &GridManifold, mode: CurvatureMode, rho: f64, horizon: f64, lf: &LocalFields) -> PointwiseProfile {
    let decay = (-2.0 * rho * horizon).exp();
    profile(m, "local_gradient_commutation", mode, horizon, |i| lf.grad_ratio[i], |i| decay * lf.a[i])
}

/// `P_T(g log g) − P_T g log P_T g ≤ (1 − e^{−2ρT})/(2ρ) · P_T(Γ(g)/g)`.
pub fn eval_local_lsi(m: &GridManifold, rho: f64, g: &ScalarField, horizon: f64) -> Result<PointwiseProfile> {
    let mode = rho_mode(m, rho)?;
    let lf = local_fields(m, g, horizon)?;
    Ok(lsi_profile(m, mode, rho, horizon, &lf))
}

fn lsi_profile(m: &GridManifold, mode: CurvatureMode, rho: f64, horizon: f64, lf: &LocalFields) -> PointwiseProfile {
    let c = lsi_coefficient(rho, horizon);
    profile(m, "local_lsi", mode, horizon, |i| lf.ent[i], |i| c * lf.a[i])
}

/// `(e^{2ρT} − 1)/(2ρ) · Γ(P_T g)/P_T g ≤ P_T(g log g) − P_T g log P_T g`.
pub fn eval_reverse_lsi(m: &GridManifold, rho: f64, g: &ScalarField, horizon: f64) -> Result<PointwiseProfile> {
    let mode = rho_mode(m, rho)?;
    let lf = local_fields(m, g, horizon)?;
    Ok(reverse_lsi_profile(m, mode, rho, horizon, &lf))
}

fn reverse_lsi_profile(m: &GridManifold, mode: CurvatureMode, rho: f64, horizon: f64, lf: &LocalFields) -> PointwiseProfile {
    let c = reverse_lsi_coefficient(rho, horizon);
    profile(m, "local_reverse_lsi", mode, horizon, |i| c * lf.grad_ratio[i], |i| lf.ent[i])
}

/// The dimensional local LSI and its simplified consequence
/// `L P_T g / P_T g − P_T(Γ(g)/g) / P_T g ≤ n/(2T)`.
///
/// The first profile is
/// `(n/2T) u exp(2B/(n u)) ≤ A − L u + (n/2T) u` with `B = Ent − T L u`;
/// see [`BRACKET_READING`].
pub fn eval_dim_lsi(m: &GridManifold, n: f64, g: &ScalarField, horizon: f64) -> Result<Vec<PointwiseProfile>> {
    let mode = dim_mode(m, n)?;
    let lf = local_fields(m, g, horizon)?;
    Ok(dim_lsi_profiles(m, mode, n, horizon, &lf))
}

fn dim_lsi_profiles(m: &GridManifold, mode: CurvatureMode, n: f64, horizon: f64, lf: &LocalFields) -> Vec<PointwiseProfile> {
    let k = n / (2.0 * horizon);
    let bracket = |i: usize| lf.ent[i] - horizon * lf.lu[i];
    let mut full = profile(
        m,
        "local_dim_lsi",
        mode,
        horizon,
        |i| k * lf.u[i] * (2.0 * bracket(i) / (n * lf.u[i])).exp(),
        |i| lf.a[i] - lf.lu[i] + k * lf.u[i],
    );
    full.meta.note = Some(BRACKET_READING.into());
    let simplified = profile(
        m,
        "local_dim_lsi_simplified",
        mode,
        horizon,
        |i| lf.lu[i] / lf.u[i] - lf.a[i] / lf.u[i],
        |_| k,
    );
    vec![full, simplified]
}

/// The dimensional reverse local LSI
/// `(n/2T) u exp(−2B/(n u)) ≤ −Γ(u)/u + L u + (n/2T) u`, the Li-Yau
/// inequality `Γ(u)/u² − L u/u ≤ n/(2T)`, and (informational) the variant
/// `Γ(u)/u² − L u ≤ n/(2T)` without the division of `L u` by `u`.
pub fn eval_dim_reverse_liyau(m: &GridManifold, n: f64, g: &ScalarField, horizon: f64) -> Result<Vec<PointwiseProfile>> {
    let mode = dim_mode(m, n)?;
    let lf = local_fields(m, g, horizon)?;
    Ok(dim_reverse_profiles(m, mode, n, horizon, &lf))
}

fn dim_reverse_profiles(m: &GridManifold, mode: CurvatureMode, n: f64, horizon: f64, lf: &LocalFields) -> Vec<PointwiseProfile> {
    let k = n / (2.0 * horizon);
    let bracket = |i: usize| lf.ent[i] - horizon * lf.lu[i];
    let mut reverse = profile(
        m,
        "local_dim_reverse_lsi",
        mode,
        horizon,
        |i| k * lf.u[i] * (-2.0 * bracket(i) / (n * lf.u[i])).exp(),
        |i| -lf.grad_ratio[i] + lf.lu[i] + k * lf.u[i],
    );
    reverse.meta.note = Some(BRACKET_READING.into());
    let li_yau = profile(
        m,
        "local_li_yau",
        mode,
        horizon,
        |i| lf.grad_ratio[i] / lf.u[i] - lf.lu[i] / lf.u[i],
        |_| k,
    );
    let mut literal = profile(
        m,
        "local_li_yau_literal",
        mode,
        horizon,
        |i| lf.grad_ratio[i] / lf.u[i] - lf.lu[i],
        |_| k,
    );
    literal.informational = true;
    literal.meta.note = Some("L P_T g not divided by P_T g".into());
    vec![reverse, li_yau, literal]
}

/// Every local inequality of a curvature regime, sharing one set of fields.
pub fn local_suite(m: &GridManifold, mode: CurvatureMode, g: &ScalarField, horizon: f64) -> Result<Vec<PointwiseProfile>> {
    m.require_mode(mode)?;
    let lf = local_fields(m, g, horizon)?;
    Ok(match mode {
        CurvatureMode::RhoInfinity { rho } => vec![
            grad_commutation_profile(m, mode, rho, horizon, &lf),
            lsi_profile(m, mode, rho, horizon, &lf),
            reverse_lsi_profile(m, mode, rho, horizon, &lf),
        ],
        CurvatureMode::ZeroN { dim } => {
            let mut out = dim_lsi_profiles(m, mode, dim, horizon, &lf);
            out.extend(dim_reverse_profiles(m, mode, dim, horizon, &lf));
            out
        }
    })
}
