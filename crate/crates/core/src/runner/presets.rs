use std::f64::consts::PI;

use super::config::Preset;
use crate::error::{Error, Result};
use crate::grid::{GridManifold, ManifoldKind, ScalarField};

fn wrapped(d: f64, period: f64) -> f64 {
    (d + 0.5 * period).rem_euclid(period) - 0.5 * period
}

/// Evaluates a preset on the grid.
///
/// | preset | value |
/// |---|---|
/// | `constant value=1` | `value` |
/// | `cosine amplitude=0.5 center=0 freq=1` | `1 + a · mean_k cos(freq (x_k − center))` |
/// | `bump width base=0 center=0` | `base +` a von Mises bump (Gaussian on the line) |
/// | `gaussian mean=0 variance=1` | a Gaussian density relative to the reference measure |
/// | `heat_column point=0 time` | `p_time(point, ·)` |
/// | `exp_sine amplitude=1 freq=1` | `exp(a Σ_k sin(freq x_k))` |
pub fn evaluate(p: &Preset, m: &GridManifold) -> Result<ScalarField> {
    let periodic = m.kind() != ManifoldKind::OuLine;
    let period = m.extent();
    let dim = m.dim() as f64;
    match p.name.as_str() {
        "constant" => Ok(m.constant(p.param("value", 1.0))),
        "cosine" => {
            let (a, c, k) = (p.param("amplitude", 0.5), p.param("center", 0.0), p.param("freq", 1.0));
            m.from_fn(|x| 1.0 + a * x.iter().map(|v| (k * (v - c)).cos()).sum::<f64>() / dim)
        }
        "bump" => {
            let (w, c, base) = (p.param("width", 1.0), p.param("center", 0.0), p.param("base", 0.0));
            if periodic {
                let k = 2.0 * PI / period;
                let kappa = 1.0 / (k * w).powi(2);
                m.from_fn(|x| base + (kappa * x.iter().map(|v| (k * (v - c)).cos() - 1.0).sum::<f64>()).exp())
            } else {
                m.from_fn(|x| base + (-x.iter().map(|v| (v - c).powi(2)).sum::<f64>() / (2.0 * w * w)).exp())
            }
        }
        "gaussian" => {
            let (mean, var) = (p.param("mean", 0.0), p.param("variance", 1.0));
            if var <= 0.0 {
                return Err(Error::Domain(format!("gaussian variance must be positive, got {var}")));
            }
            if periodic {
                m.from_fn(|x| (-x.iter().map(|v| wrapped(v - mean, period).powi(2)).sum::<f64>() / (2.0 * var)).exp())
            } else {
                m.from_fn(|x| {
                    let q: f64 = x.iter().map(|v| -(v - mean).powi(2) / (2.0 * var) + 0.5 * v * v).sum();
                    q.exp() / var.powf(0.5 * dim)
                })
            }
        }
        "heat_column" => {
            let y = m.nearest_index(&vec![p.param("point", 0.0); m.dim()]);
            m.heat_column(y, p.param("time", 1.0))
        }
        "exp_sine" => {
            let (a, k) = (p.param("amplitude", 1.0), p.param("freq", 1.0));
            m.from_fn(|x| (a * x.iter().map(|v| (k * v).sin()).sum::<f64>()).exp())
        }
        other => Err(Error::Domain(format!("unknown preset `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, integrate};

    #[test]
    fn presets_evaluate() {
        let m = build_grid(ManifoldKind::Circle, 64, 2.0 * PI).unwrap();
        let cos = evaluate(&Preset::parse("cosine amplitude=0.5").unwrap(), &m).unwrap();
        assert!((cos[0] - 1.5).abs() < 1e-15);
        let bump = evaluate(&Preset::parse("bump width=0.3 center=1").unwrap(), &m).unwrap();
        let top = m.nearest_index(&[1.0]);
        assert!(bump.iter().all(|&v| v <= bump[top] + 1e-15));
        let col = evaluate(&Preset::parse("heat_column point=2 time=0.5").unwrap(), &m).unwrap();
        assert!((integrate(&m, &col).unwrap() - 1.0).abs() < 1e-10);

        let ou = build_grid(ManifoldKind::OuLine, 128, 10.0).unwrap();
        let std = evaluate(&Preset::parse("gaussian").unwrap(), &ou).unwrap();
        assert!(std.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(evaluate(&Preset::parse("gaussian variance=-1").unwrap(), &ou).is_err());
    }
}
