use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EntropicPath;
use crate::error::Result;
use crate::numerics::{lsi_coefficient, reverse_lsi_coefficient};
use crate::report::{float17, write_csv, CurvatureMode, InequalityReport, ReportMeta};

/// Slack tolerance of the bridge inequalities.
pub const BRIDGE_TOLERANCE: f64 = 1e-6;

/// Relative agreement required between the two entropic-cost estimates.
pub const COST_AGREEMENT: f64 = 1e-6;

/// Largest accepted deviation of the sampled energy from `E_T`.
pub const ENERGY_DEVIATION_TOLERANCE: f64 = 1e-7;

/// Number of equally spaced times (endpoints included) the energy is sampled at.
pub const ENERGY_SAMPLES: usize = 11;

/// Two estimates of the entropic cost `C_T = Λ − 2(F(ν) − F(μ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    /// From the time quadrature of the velocity cost.
    #[serde(with = "float17")]
    pub quadrature: f64,
    /// From `4∫ [P_T(g log g) − P_T g log P_T g] f dx`.
    #[serde(with = "float17")]
    pub closed_form: f64,
    #[serde(with = "float17")]
    pub lambda_quadrature: f64,
    #[serde(with = "float17")]
    pub lambda_closed_form: f64,
    #[serde(with = "float17")]
    pub entropy_start: f64,
    #[serde(with = "float17")]
    pub entropy_end: f64,
    /// Time nodes used by the quadrature.
    pub nodes: usize,
}

impl CostEstimate {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.quadrature.abs().max(self.closed_form.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.quadrature - self.closed_form).abs() / scale
        }
    }

    pub fn agrees(&self) -> bool {
        self.relative_gap() <= COST_AGREEMENT
    }
}

/// The conserved energy and how far the sampled values stray from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    /// `E_T = 4∫ L(P_T g) f dx`.
    #[serde(with = "float17")]
    pub value: f64,
    /// Largest `|E(t) − E_T|` over the sampled times.
    #[serde(with = "float17")]
    pub deviation: f64,
    /// `−4∫ Γ(P_{T/2} g, P_{T/2} f) dx`.
    #[serde(with = "float17")]
    pub midpoint_cross: f64,
}

impl EnergyEstimate {
    pub fn conserved(&self) -> bool {
        self.deviation <= ENERGY_DEVIATION_TOLERANCE
    }
}

/// One time sample of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    #[serde(with = "float17")]
    pub t: f64,
    #[serde(with = "float17")]
    pub mass: f64,
    #[serde(with = "float17")]
    pub velocity_cost: f64,
    #[serde(with = "float17")]
    pub energy_sample: f64,
}

/// The endpoint quantities entering the bridge inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeQuantities {
    /// `|μ̇₀ + grad F|²_μ`.
    #[serde(with = "float17")]
    pub v_start: f64,
    /// `|μ̇_T + grad F|²_ν`.
    #[serde(with = "float17")]
    pub v_end: f64,
    /// `Λ = C_T + 2(F(ν) − F(μ))`.
    #[serde(with = "float17")]
    pub lambda: f64,
    #[serde(with = "float17")]
    pub energy: f64,
}

fn path_samples(path: &EntropicPath<'_>, count: usize) -> Result<Vec<PathSample>> {
    let horizon = path.horizon();
    (0..count)
        .map(|k| {
            let t = horizon * (k as f64 / (count - 1) as f64);
            let s = path.slice(t)?;
            Ok(PathSample {
                t,
                mass: path.mass_of(&s)?,
                velocity_cost: path.velocity_cost_of(&s)?,
                energy_sample: path.energy_of(&s)?,
            })
        })
        .collect()
}

fn energy_from(path: &EntropicPath<'_>, samples: &[PathSample]) -> Result<EnergyEstimate> {
    let value = path.energy()?;
    let deviation = samples
        .iter()
        .map(|s| (s.energy_sample - value).abs())
        .fold(0.0, f64::max);
    Ok(EnergyEstimate {
        value,
        deviation,
        midpoint_cross: path.energy_cross(0.5 * path.horizon())?,
    })
}

/// Both estimates of the entropic cost along `path`.
pub fn entropic_cost(path: &EntropicPath<'_>) -> Result<CostEstimate> {
    let (lambda_quadrature, nodes) = path.lambda_quadrature()?;
    let lambda_closed_form = path.lambda_closed_form()?;
    let (entropy_start, entropy_end) = path.endpoint_entropies()?;
    let shift = 2.0 * (entropy_end - entropy_start);
    Ok(CostEstimate {
        quadrature: lambda_quadrature - shift,
        closed_form: lambda_closed_form - shift,
        lambda_quadrature,
        lambda_closed_form,
        entropy_start,
        entropy_end,
        nodes,
    })
}

/// `E_T` and its largest deviation over [`ENERGY_SAMPLES`] sampled times.
pub fn conserved_energy(path: &EntropicPath<'_>) -> Result<EnergyEstimate> {
    energy_from(path, &path_samples(path, ENERGY_SAMPLES)?)
}

/// Evaluates the bridge inequalities of one curvature regime from precomputed
/// endpoint quantities.
///
/// Under CD(ρ, ∞): gradient commutation `v₀ ≤ e^{−2ρT} v_T`, the LSI
/// `Λ ≤ c(ρ,T) v_T` and the reverse LSI `c_rev(ρ,T) v₀ ≤ Λ`. Under CD(0, n):
/// with `Φ = Λ − T E`, the exponential estimates
/// `exp(Φ/2n) ≤ 1 + T/(2n)(v_T − E)` and `exp(−Φ/2n) ≤ 1 − T/(2n)(v₀ − E)`,
/// and the energy bounds `E ≤ 2n/T + v_T`, `−2n/T + v₀ ≤ E`.
pub fn bridge_reports(mode: CurvatureMode, horizon: f64, q: &BridgeQuantities) -> Vec<InequalityReport> {
    let meta = ReportMeta::default().with_mode(mode).horizon(horizon);
    let report = |name: &str, lhs: f64, rhs: f64| {
        InequalityReport::integrated(name, lhs, rhs, BRIDGE_TOLERANCE).with_meta(meta.clone())
    };
    let t = horizon;
    match mode {
        CurvatureMode::RhoInfinity { rho } => vec![
            report("bridge_gradient_commutation", q.v_start, (-2.0 * rho * t).exp() * q.v_end),
            report("bridge_lsi", q.lambda, lsi_coefficient(rho, t) * q.v_end),
            report("bridge_reverse_lsi", reverse_lsi_coefficient(rho, t) * q.v_start, q.lambda),
        ],
        CurvatureMode::ZeroN { dim: n } => {
            let phi = q.lambda - t * q.energy;
            let k = t / (2.0 * n);
            vec![
                report("bridge_dim_lsi", (phi / (2.0 * n)).exp(), 1.0 + k * (q.v_end - q.energy)),
                report(
                    "bridge_dim_reverse_lsi",
                    (-phi / (2.0 * n)).exp(),
                    1.0 - k * (q.v_start - q.energy),
                ),
                report("bridge_energy_upper", q.energy, 2.0 * n / t + q.v_end),
                report("bridge_variational_li_yau", -2.0 * n / t + q.v_start, q.energy),
            ]
        }
    }
}

/// Checks the bridge inequalities of `mode` along `path`, refusing a regime
/// the underlying space does not satisfy.
pub fn check_bridge_inequalities(
    path: &EntropicPath<'_>,
    mode: CurvatureMode,
) -> Result<Vec<InequalityReport>> {
    path.manifold().require_mode(mode)?;
    let (lambda, _) = path.lambda_quadrature()?;
    let q = BridgeQuantities {
        v_start: path.velocity_cost(0.0)?,
        v_end: path.velocity_cost(path.horizon())?,
        lambda,
        energy: path.energy()?,
    };
    Ok(bridge_reports(mode, path.horizon(), &q))
}

/// Everything measured along one path, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeDiagnostics {
    pub scenario: Option<String>,
    #[serde(with = "float17")]
    pub horizon: f64,
    /// `∫ f P_T g dx`.
    #[serde(with = "float17")]
    pub normalization: f64,
    pub cost: CostEstimate,
    pub energy: EnergyEstimate,
    pub endpoints: BridgeQuantities,
    pub samples: Vec<PathSample>,
    pub reports: Vec<InequalityReport>,
}

impl BridgeDiagnostics {
    /// Every gating report passes and both consistency diagnostics are
    /// within tolerance.
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(InequalityReport::gates_ok) && self.cost.agrees() && self.energy.conserved()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Per-time samples with columns `t,mass,velocity_cost,energy_sample`.
    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["t", "mass", "velocity_cost", "energy_sample"],
            self.samples
                .iter()
                .map(|s| vec![s.t, s.mass, s.velocity_cost, s.energy_sample]),
        )
    }
}

/// Runs the full bridge pipeline along `path`. Without a mode only the cost
/// and energy diagnostics are produced.
pub fn bridge_diagnostics(
    path: &EntropicPath<'_>,
    mode: Option<CurvatureMode>,
    scenario: Option<&str>,
) -> Result<BridgeDiagnostics> {
    if let Some(mode) = mode {
        path.manifold().require_mode(mode)?;
    }
    let cost = entropic_cost(path)?;
    let samples = path_samples(path, ENERGY_SAMPLES)?;
    let energy = energy_from(path, &samples)?;
    let endpoints = BridgeQuantities {
        v_start: samples[0].velocity_cost,
        v_end: samples[ENERGY_SAMPLES - 1].velocity_cost,
        lambda: cost.lambda_quadrature,
        energy: energy.value,
    };
    let mut reports = match mode {
        Some(mode) => bridge_reports(mode, path.horizon(), &endpoints),
        None => Vec::new(),
    };
    for r in &mut reports {
        r.meta.scenario = scenario.map(str::to_owned);
    }
    Ok(BridgeDiagnostics {
        scenario: scenario.map(str::to_owned),
        horizon: path.horizon(),
        normalization: path.normalization(),
        cost,
        energy,
        endpoints,
        samples,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{ipfp_solve, product_path};
    use crate::grid::{build_grid, Density, ManifoldKind};
    use crate::report::Location;
    use std::f64::consts::PI;

    #[test]
    fn uniform_path_has_zero_everything() {
        let m = build_grid(ManifoldKind::Circle, 32, 2.0 * PI).unwrap();
        let one = m.constant(1.0);
        let path = product_path(&m, &one, &one, 0.5).unwrap();
        let d = bridge_diagnostics(&path, Some(CurvatureMode::ZeroN { dim: 1.0 }), Some("u")).unwrap();
        assert_eq!(d.cost.quadrature, 0.0);
        assert_eq!(d.cost.closed_form, 0.0);
        assert_eq!((d.energy.value, d.energy.deviation), (0.0, 0.0));
        for r in &d.reports {
            assert!(r.pass, "{r:?}");
            let expected = if r.name.starts_with("bridge_energy") || r.name.contains("li_yau") { 4.0 } else { 0.0 };
            assert_eq!(r.slack, expected, "{}", r.name);
        }
        let rho = bridge_reports(CurvatureMode::RhoInfinity { rho: -0.5 }, 0.5, &d.endpoints);
        assert!(rho.iter().all(|r| r.slack == 0.0 && r.location == Location::Integrated));
    }

    #[test]
    fn cosine_pair_pipeline() {
        let m = build_grid(ManifoldKind::Circle, 128, 2.0 * PI).unwrap();
        let mu = Density::normalized(&m, m.from_fn(|p| 1.0 + 0.5 * p[0].cos()).unwrap().into_vec()).unwrap();
        let nu = Density::normalized(&m, m.from_fn(|p| 1.0 - 0.5 * p[0].cos()).unwrap().into_vec()).unwrap();
        let p = ipfp_solve(&m, 0.5, &mu, &nu, 1e-12, 200).unwrap();
        let path = p.path().unwrap();
        let d = bridge_diagnostics(&path, Some(CurvatureMode::ZeroN { dim: 1.0 }), None).unwrap();
        assert!(d.cost.agrees(), "{:?}", d.cost);
        assert!(d.energy.conserved(), "{:?}", d.energy);
        assert!((d.energy.midpoint_cross - d.energy.value).abs() < 1e-8);
        assert!(d.reports.iter().all(|r| r.pass && r.slack > 0.0), "{:?}", d.reports);
        assert!(d.samples.iter().all(|s| (s.mass - 1.0).abs() < 1e-10));
        let refused = check_bridge_inequalities(&path, CurvatureMode::RhoInfinity { rho: 1.0 });
        assert!(matches!(refused, Err(crate::Error::Refused(_))));
    }
}
