//! Inequality reports and the fixed-format float serialization used by every
//! artifact the laboratory writes.

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits in lowercase scientific notation.
pub fn sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_owned()
    } else if x > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

/// Serde helpers writing `f64` through [`sci`]; non-finite values become `null`.
pub mod float17 {
    use super::*;

    fn raw(x: f64) -> Box<RawValue> {
        let text = if x.is_finite() { sci(x) } else { "null".to_owned() };
        RawValue::from_string(text).expect("formatted float is valid JSON")
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        raw(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(
            x: &Option<f64>,
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            x.map(raw).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Option<f64>, D::Error> {
            Option::<f64>::deserialize(d)
        }
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(x: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
            x.iter().map(|&v| raw(v)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|v| v.unwrap_or(f64::NAN))
                .collect())
        }
    }

    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(
            x: &[Vec<f64>],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            x.iter()
                .map(|row| row.iter().map(|&v| raw(v)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
            Ok(Vec::<Vec<Option<f64>>>::deserialize(d)?
                .into_iter()
                .map(|row| row.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
                .collect())
        }
    }
}

/// Curvature-dimension regime an inequality family is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureMode {
    /// CD(ρ, ∞) / (ρ, ∞)-convexity.
    RhoInfinity {
        #[serde(with = "float17")]
        rho: f64,
    },
    /// CD(0, n) / (0, n)-convexity.
    ZeroN {
        #[serde(with = "float17")]
        dim: f64,
    },
}

impl CurvatureMode {
    pub fn label(&self) -> String {
        match self {
            CurvatureMode::RhoInfinity { rho } => format!("CD({rho},inf)"),
            CurvatureMode::ZeroN { dim } => format!("CD(0,{dim})"),
        }
    }
}

/// Where an inequality was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Integrated,
    Point(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    #[serde(with = "float17::opt", default)]
    pub horizon: Option<f64>,
    #[serde(with = "float17::opt", default)]
    pub rho: Option<f64>,
    #[serde(with = "float17::opt", default)]
    pub dim: Option<f64>,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub note: Option<String>,
}

impl ReportMeta {
    pub fn with_mode(mut self, mode: CurvatureMode) -> Self {
        match mode {
            CurvatureMode::RhoInfinity { rho } => self.rho = Some(rho),
            CurvatureMode::ZeroN { dim } => {
                self.rho = Some(0.0);
                self.dim = Some(dim);
            }
        }
        self
    }

    pub fn horizon(mut self, t: f64) -> Self {
        self.horizon = Some(t);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// One evaluated inequality `lhs ≤ rhs`.
///
/// `slack = rhs − lhs`, so a nonnegative slack means the inequality holds.
/// Informational reports (literal printed variants of an inequality) are
/// evaluated and written out but do not gate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub location: Location,
    #[serde(with = "float17")]
    pub lhs: f64,
    #[serde(with = "float17")]
    pub rhs: f64,
    #[serde(with = "float17")]
    pub slack: f64,
    #[serde(with = "float17")]
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default)]
    pub informational: bool,
    #[serde(default)]
    pub meta: ReportMeta,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, location: Location, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        InequalityReport {
            name: name.into(),
            location,
            lhs,
            rhs,
            slack,
            tolerance,
            pass: slack.is_finite() && slack >= -tolerance,
            informational: false,
            meta: ReportMeta::default(),
        }
    }

    pub fn integrated(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(name, Location::Integrated, lhs, rhs, tolerance)
    }

    pub fn with_meta(mut self, meta: ReportMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn informational(mut self) -> Self {
        self.informational = true;
        self
    }

    /// True when the report either passes or is informational only.
    pub fn gates_ok(&self) -> bool {
        self.pass || self.informational
    }
}

/// Pointwise evaluation of an inequality over a set of grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseProfile {
    pub name: String,
    pub points: Vec<usize>,
    #[serde(with = "float17::vec")]
    pub lhs: Vec<f64>,
    #[serde(with = "float17::vec")]
    pub rhs: Vec<f64>,
    /// Relative tolerance: a point passes when
    /// `slack ≥ −rel_tol · (1 + max(|lhs|, |rhs|))`.
    #[serde(with = "float17")]
    pub rel_tol: f64,
    pub informational: bool,
    pub meta: ReportMeta,
}

impl PointwiseProfile {
    pub fn slack(&self) -> Vec<f64> {
        self.rhs.iter().zip(&self.lhs).map(|(r, l)| r - l).collect()
    }

    fn tolerance_at(&self, k: usize) -> f64 {
        self.rel_tol * (1.0 + self.lhs[k].abs().max(self.rhs[k].abs()))
    }

    /// The report at the point with the smallest tolerance-normalized slack.
    pub fn worst(&self) -> Result<InequalityReport> {
        if self.points.is_empty() {
            return Err(Error::Empty("pointwise profile has no points"));
        }
        let mut best = 0;
        let mut best_score = f64::INFINITY;
        for k in 0..self.points.len() {
            let s = self.rhs[k] - self.lhs[k];
            let score = if s.is_nan() { f64::NEG_INFINITY } else { s / self.tolerance_at(k) };
            if score < best_score {
                best_score = score;
                best = k;
            }
        }
        let mut r = InequalityReport::new(
            self.name.clone(),
            Location::Point(self.points[best]),
            self.lhs[best],
            self.rhs[best],
            self.tolerance_at(best),
        )
        .with_meta(self.meta.clone());
        r.informational = self.informational;
        Ok(r)
    }

    pub fn all_pass(&self) -> bool {
        (0..self.points.len()).all(|k| {
            let s = self.rhs[k] - self.lhs[k];
            s.is_finite() && s >= -self.tolerance_at(k)
        })
    }
}

/// Writes a CSV table with a header row and [`sci`]-formatted cells.
pub fn write_csv(
    path: &std::path::Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(sci).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
