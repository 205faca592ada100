use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::local_fields;
use crate::bridge::product_path;
use crate::error::{Error, Result};
use crate::grid::{apply_generator, integrate, GridManifold, ManifoldKind, ScalarField};
use crate::numerics::lsi_coefficient;
use crate::report::{float17, write_csv, CurvatureMode};

/// Bumps narrower than this many grid spacings across (two widths) are
/// refused.
pub const MIN_POINTS_ACROSS: f64 = 6.0;

/// Which bridge/local pair a delta-limit experiment follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalPair {
    /// `∫ Γ(P_T g)/P_T g f dx ≤ e^{−2ρT} ∫ P_T(Γ(g)/g) f dx` against its
    /// pointwise limit.
    GradientCommutation,
    /// The LSI of the bridge, `Λ ≤ c(ρ,T) v_T`, against the local LSI.
    Lsi,
}

impl LocalPair {
    pub fn as_str(&self) -> &'static str {
        match self {
            LocalPair::GradientCommutation => "gradient_commutation",
            LocalPair::Lsi => "lsi",
        }
    }
}

impl fmt::Display for LocalPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LocalPair {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gradient_commutation" => Ok(LocalPair::GradientCommutation),
            "lsi" => Ok(LocalPair::Lsi),
            other => Err(format!("unknown inequality pair `{other}` (gradient_commutation, lsi)")),
        }
    }
}

/// Both sides of a bridge inequality along a sequence of shrinking bumps,
/// next to the pointwise values they converge to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLimitRecord {
    pub pair: LocalPair,
    pub point: usize,
    #[serde(with = "float17")]
    pub horizon: f64,
    #[serde(with = "float17")]
    pub rho: f64,
    #[serde(with = "float17::vec")]
    pub widths: Vec<f64>,
    #[serde(with = "float17::vec")]
    pub bridge_lhs: Vec<f64>,
    #[serde(with = "float17::vec")]
    pub bridge_rhs: Vec<f64>,
    #[serde(with = "float17")]
    pub local_lhs: f64,
    #[serde(with = "float17")]
    pub local_rhs: f64,
    #[serde(with = "float17::vec")]
    pub gap_lhs: Vec<f64>,
    #[serde(with = "float17::vec")]
    pub gap_rhs: Vec<f64>,
    /// Gaps predicted by a second-order Taylor expansion around the point.
    #[serde(with = "float17::vec")]
    pub taylor_lhs: Vec<f64>,
    #[serde(with = "float17::vec")]
    pub taylor_rhs: Vec<f64>,
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

impl DeltaLimitRecord {
    /// Both gap sequences decrease strictly as the bumps shrink (sequences
    /// that are identically zero count as decreasing).
    pub fn monotone(&self) -> bool {
        decreasing(&self.gap_lhs) && decreasing(&self.gap_rhs)
    }

    /// The gaps at the narrowest width are at most `factor` times the Taylor
    /// prediction.
    pub fn within_taylor(&self, factor: f64) -> bool {
        let k = self.widths.len() - 1;
        self.gap_lhs[k] <= factor * self.taylor_lhs[k] && self.gap_rhs[k] <= factor * self.taylor_rhs[k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.widths.len())
            .map(|k| {
                vec![
                    self.widths[k],
                    self.bridge_lhs[k],
                    self.bridge_rhs[k],
                    self.local_lhs,
                    self.local_rhs,
                    self.gap_lhs[k],
                    self.gap_rhs[k],
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["width", "bridge_lhs", "bridge_rhs", "local_lhs", "local_rhs", "gap_lhs", "gap_rhs"],
            self.rows(),
        )
    }
}

fn wrapped(d: f64, period: f64) -> f64 {
    (d + 0.5 * period).rem_euclid(period) - 0.5 * period
}

/// Von Mises bump of the given width around `center`, normalized to unit mass,
/// with its second moment along one axis.
fn bump(m: &GridManifold, center: &[f64], width: f64) -> Result<(ScalarField, f64)> {
    let period = m.extent();
    let k = 2.0 * std::f64::consts::PI / period;
    let kappa = 1.0 / (k * width).powi(2);
    let raw = m.from_fn(|p| {
        let s: f64 = p.iter().zip(center).map(|(x, c)| (k * (x - c)).cos() - 1.0).sum();
        (kappa * s).exp()
    })?;
    let mass = integrate(m, &raw)?;
    let f = raw.map(|v| v / mass);
    let second: Vec<f64> = (0..m.len())
        .map(|i| wrapped(m.point(i)[0] - center[0], period).powi(2) * f[i])
        .collect();
    Ok((f, integrate(m, &second)?))
}

/// Runs the bridge side of an inequality pair along von Mises bumps
/// `f → δ_y` of decreasing width and compares it with the pointwise
/// inequality at `y`.
///
/// The bridge sides are scaled by `∫ f P_T g dx / 4`, so that they converge
/// to `Γ(P_T g)/P_T g (y)` and `P_T(Γ(g)/g)(y)` (gradient commutation) or to
/// `P_T(g log g) − P_T g log P_T g` at `y` and `c(ρ,T) P_T(Γ(g)/g)(y)` (LSI).
/// Only periodic spaces are supported.
pub fn delta_limit_bridge_vs_local(
    m: &GridManifold,
    pair: LocalPair,
    rho: f64,
    g: &ScalarField,
    y: usize,
    horizon: f64,
    widths: &[f64],
) -> Result<DeltaLimitRecord> {
    if m.kind() == ManifoldKind::OuLine {
        return Err(Error::Refused("delta-limit experiments need a periodic space".into()));
    }
    m.require_mode(CurvatureMode::RhoInfinity { rho })?;
    if y >= m.len() {
        return Err(Error::Domain(format!("point index {y} out of range")));
    }
    if widths.is_empty() {
        return Err(Error::Empty("no bump widths"));
    }
    if widths.iter().any(|&w| !(w.is_finite() && w > 0.0)) || !widths.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Domain(format!("widths must be positive and strictly decreasing: {widths:?}")));
    }
    let h = m.spacing();
    for &w in widths {
        let across = 2.0 * w / h;
        if across < MIN_POINTS_ACROSS {
            return Err(Error::Refused(format!(
                "bump width {w} is under-resolved: {across:.2} grid points across, need {MIN_POINTS_ACROSS}"
            )));
        }
    }

    let lf = local_fields(m, g, horizon)?;
    let decay = (-2.0 * rho * horizon).exp();
    let c = lsi_coefficient(rho, horizon);
    let (lhs_field, rhs_field) = match pair {
        LocalPair::GradientCommutation => (lf.grad_ratio.clone(), lf.a.map(|v| decay * v)),
        LocalPair::Lsi => (lf.ent.clone(), lf.a.map(|v| c * v)),
    };
    let lap_lhs = apply_generator(m, &lhs_field)?[y];
    let lap_rhs = apply_generator(m, &rhs_field)?[y];
    let center = m.point(y);

    let mut rec = DeltaLimitRecord {
        pair,
        point: y,
        horizon,
        rho,
        widths: widths.to_vec(),
        bridge_lhs: Vec::new(),
        bridge_rhs: Vec::new(),
        local_lhs: lhs_field[y],
        local_rhs: rhs_field[y],
        gap_lhs: Vec::new(),
        gap_rhs: Vec::new(),
        taylor_lhs: Vec::new(),
        taylor_rhs: Vec::new(),
    };
    for &w in widths {
        let (f, m2) = bump(m, &center, w)?;
        let path = product_path(m, &f, g, horizon)?;
        let scale = path.normalization() / 4.0;
        let (lhs, rhs) = match pair {
            LocalPair::GradientCommutation => (
                scale * path.velocity_cost(0.0)?,
                decay * scale * path.velocity_cost(horizon)?,
            ),
            LocalPair::Lsi => (
                scale * path.lambda_quadrature()?.0,
                c * scale * path.velocity_cost(horizon)?,
            ),
        };
        rec.bridge_lhs.push(lhs);
        rec.bridge_rhs.push(rhs);
        rec.gap_lhs.push((lhs - rec.local_lhs).abs());
        rec.gap_rhs.push((rhs - rec.local_rhs).abs());
        rec.taylor_lhs.push((0.5 * lap_lhs * m2).abs());
        rec.taylor_rhs.push((0.5 * lap_rhs * m2).abs());
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    #[test]
    fn constant_g_gives_zero_entries() {
        let m = build_grid(ManifoldKind::Circle, 256, 2.0 * PI).unwrap();
        let g = m.constant(1.0);
        for pair in [LocalPair::GradientCommutation, LocalPair::Lsi] {
            let r = delta_limit_bridge_vs_local(&m, pair, 0.0, &g, 17, 0.5, &[0.4, 0.2, 0.1]).unwrap();
            assert!(r.rows().iter().all(|row| row[1..].iter().all(|&v| v == 0.0)), "{r:?}");
            assert!(r.monotone());
        }
    }

    #[test]
    fn gaps_shrink_with_the_bump() {
        let m = build_grid(ManifoldKind::Circle, 512, 2.0 * PI).unwrap();
        let g = m.from_fn(|p| 1.0 + 0.5 * p[0].cos() + 0.2 * (2.0 * p[0]).sin()).unwrap();
        let widths = [0.4, 0.2, 0.1, 0.05];
        for pair in [LocalPair::GradientCommutation, LocalPair::Lsi] {
            let r = delta_limit_bridge_vs_local(&m, pair, 0.0, &g, 100, 0.5, &widths).unwrap();
            assert!(r.monotone(), "{r:#?}");
            assert!(r.within_taylor(10.0), "{r:#?}");
        }
    }

    #[test]
    fn refusals() {
        let m = build_grid(ManifoldKind::Circle, 64, 2.0 * PI).unwrap();
        let g = m.constant(1.0);
        let under = delta_limit_bridge_vs_local(&m, LocalPair::Lsi, 0.0, &g, 0, 0.5, &[0.4, 0.1]);
        assert!(matches!(under, Err(Error::Refused(msg)) if msg.contains("under-resolved")));
        let wrong = delta_limit_bridge_vs_local(&m, LocalPair::Lsi, 0.0, &g, 0, 0.5, &[0.2, 0.4]);
        assert!(matches!(wrong, Err(Error::Domain(_))));
        let rho = delta_limit_bridge_vs_local(&m, LocalPair::Lsi, 1.0, &g, 0, 0.5, &[0.4]);
        assert!(matches!(rho, Err(Error::Refused(_))));
    }
}
