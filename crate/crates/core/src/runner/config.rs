//! `key = value` experiment files with `[section]` headers.
//!
//! ```text
//! # comments start with '#'
//! [scenario]
//! id = circle-bump-0n
//! suite = bridge
//!
//! [manifold]
//! kind = circle
//! n = 256
//!
//! [mode]
//! kind = zero_n
//! n = 1
//!
//! [bridge]
//! horizon = 0.5
//! mu = cosine amplitude=0.5
//! nu = cosine amplitude=-0.5
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::ManifoldKind;
use crate::local::LocalPair;
use crate::report::CurvatureMode;

const SECTIONS: &[(&str, &[&str])] = &[
    ("scenario", &["id", "description", "suite", "seed", "output"]),
    ("manifold", &["kind", "n", "extent", "spectrum_csv"]),
    ("mode", &["kind", "rho", "n"]),
    (
        "bridge",
        &["horizon", "mu", "nu", "f", "g", "dirac_point", "ipfp_tol", "max_iter", "time_nodes"],
    ),
    ("local", &["horizon", "g"]),
    ("toy", &["model", "rho", "n", "dim", "x", "y", "horizon", "m", "perturbations"]),
    ("delta", &["pairs", "point", "g", "horizon", "widths", "rho"]),
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

/// One parsed section; typed accessors report the line of the offending key.
struct Section<'a> {
    name: &'a str,
    line: usize,
    entries: &'a BTreeMap<String, Entry>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn missing(&self, key: &str) -> Error {
        Error::config(Some(self.line), Some(key), format!("[{}] requires `{key}`", self.name))
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                Error::config(Some(e.line), Some(key), format!("expected {what}, got `{}` ({err})", e.value))
            }),
        }
    }

    fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|e| e.value.clone())
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parse(key, "a number")?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(self.invalid(key, "must be finite"));
            }
        }
        Ok(v)
    }

    fn req_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        let v = self.f64(key)?;
        if v.is_some_and(|x| x <= 0.0) {
            return Err(self.invalid(key, "must be positive"));
        }
        Ok(v)
    }

    fn req_positive(&self, key: &str) -> Result<f64> {
        self.positive(key)?.ok_or_else(|| self.missing(key))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse(key, "a nonnegative integer")
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::config(Some(e.line), Some(key), format!("expected a comma-separated list of numbers, got `{}`", e.value))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn preset(&self, key: &str) -> Result<Option<Preset>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => Preset::parse(&e.value)
                .map(Some)
                .map_err(|msg| Error::config(Some(e.line), Some(key), msg)),
        }
    }

    fn invalid(&self, key: &str, msg: &str) -> Error {
        let line = self.raw(key).map(|e| e.line);
        Error::config(line, Some(key), format!("`{key}` {msg}"))
    }
}

/// A named function preset with numeric parameters, written as
/// `name key=value ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl Preset {
    const KNOWN: &'static [(&'static str, &'static [&'static str])] = &[
        ("constant", &["value"]),
        ("cosine", &["amplitude", "center", "freq"]),
        ("bump", &["width", "center", "base"]),
        ("gaussian", &["mean", "variance"]),
        ("heat_column", &["point", "time"]),
        ("exp_sine", &["amplitude", "freq"]),
    ];

    pub fn parse(text: &str) -> std::result::Result<Preset, String> {
        let mut parts = text.split_whitespace();
        let name = parts.next().ok_or("empty function preset")?;
        let allowed = Self::KNOWN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, p)| *p)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::KNOWN.iter().map(|(n, _)| *n).collect();
                format!("unknown preset `{name}` (known: {})", names.join(", "))
            })?;
        let mut params = BTreeMap::new();
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("preset parameter `{part}` is not of the form key=value"))?;
            if !allowed.contains(&k) {
                return Err(format!("preset `{name}` has no parameter `{k}` (allowed: {})", allowed.join(", ")));
            }
            let x: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| format!("preset parameter `{k}` expects a number, got `{v}`"))?;
            params.insert(k.to_owned(), x);
        }
        for required in match name {
            "bump" => &["width"][..],
            "heat_column" => &["time"][..],
            _ => &[][..],
        } {
            if !params.contains_key(*required) {
                return Err(format!("preset `{name}` requires `{required}`"));
            }
        }
        Ok(Preset {
            name: name.to_owned(),
            params,
        })
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Toy,
    Bridge,
    Local,
    Delta,
    All,
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "toy" => Ok(Suite::Toy),
            "bridge" => Ok(Suite::Bridge),
            "local" => Ok(Suite::Local),
            "delta" | "delta-limit" => Ok(Suite::Delta),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite `{other}` (toy, bridge, local, delta, all)")),
        }
    }
}

impl Suite {
    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Toy => "toy",
            Suite::Bridge => "bridge",
            Suite::Local => "local",
            Suite::Delta => "delta",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub n: usize,
    pub extent: f64,
    pub spectrum_csv: bool,
}

/// Where the bridge's potentials come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BridgeSource {
    /// Solve the Schrödinger system between two densities.
    Marginals { mu: Preset, nu: Preset, tol: f64, max_iter: usize },
    /// Use the given potentials directly.
    Potentials { f: Preset, g: Preset },
    /// Interpolate from a point mass at the given coordinate.
    Dirac { point: f64, nu: Preset },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSpec {
    pub horizon: f64,
    pub source: BridgeSource,
    pub time_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSpec {
    pub horizon: f64,
    pub g: Preset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyModelSpec {
    Zero { dim: usize },
    Quadratic { rho: f64, dim: usize },
    NegLog { n: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub model: ToyModelSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub horizon: f64,
    pub m: usize,
    pub perturbations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSpec {
    pub pairs: Vec<LocalPair>,
    pub point: f64,
    pub g: Preset,
    pub horizon: f64,
    pub widths: Vec<f64>,
    pub rho: f64,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub description: String,
    pub suite: Suite,
    pub seed: u64,
    /// Output root, overriding the environment default.
    pub output: Option<PathBuf>,
    pub manifold: Option<ManifoldSpec>,
    pub mode: Option<CurvatureMode>,
    pub bridge: Option<BridgeSpec>,
    pub local: Option<LocalSpec>,
    pub toy: Option<ToySpec>,
    pub delta: Option<DeltaSpec>,
    /// Every key as written, for the report.
    pub echo: BTreeMap<String, BTreeMap<String, String>>,
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(None, None, format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

type Raw = BTreeMap<String, (usize, BTreeMap<String, Entry>)>;

fn parse_raw(text: &str) -> Result<Raw> {
    let mut raw: Raw = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(Error::config(Some(line), None, format!("unknown section [{name}]")));
            }
            if raw.contains_key(name) {
                return Err(Error::config(Some(line), None, format!("duplicate section [{name}]")));
            }
            raw.insert(name.to_owned(), (line, BTreeMap::new()));
            current = Some(name.to_owned());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::config(Some(line), None, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = current
            .as_deref()
            .ok_or_else(|| Error::config(Some(line), Some(key), "key outside of any section"))?;
        let allowed = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(Error::config(
                Some(line),
                Some(key),
                format!("unknown key `{key}` in [{section}] (allowed: {})", allowed.join(", ")),
            ));
        }
        let entries = &mut raw.get_mut(section).expect("section registered").1;
        if entries.contains_key(key) {
            return Err(Error::config(Some(line), Some(key), format!("duplicate key `{key}`")));
        }
        entries.insert(
            key.to_owned(),
            Entry {
                line,
                value: value.to_owned(),
            },
        );
    }
    Ok(raw)
}

/// Parses and validates config text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw = parse_raw(text)?;
    let section = |name: &'static str| {
        raw.get(name).map(|(line, entries)| Section {
            name,
            line: *line,
            entries,
        })
    };
    let scenario = section("scenario")
        .ok_or_else(|| Error::config(None, None, "missing [scenario] section"))?;
    let id = scenario.string("id").ok_or_else(|| scenario.missing("id"))?;
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(scenario.invalid("id", "must be nonempty and use only letters, digits, '-' and '_'"));
    }
    let suite: Suite = scenario.parse("suite", "a suite name")?.ok_or_else(|| scenario.missing("suite"))?;
    let seed: u64 = scenario.parse("seed", "an unsigned integer")?.unwrap_or(0);

    let manifold = match section("manifold") {
        None => None,
        Some(s) => {
            let kind: ManifoldKind = s.parse("kind", "a manifold kind")?.ok_or_else(|| s.missing("kind"))?;
            let n = s.usize("n")?.ok_or_else(|| s.missing("n"))?;
            let default_extent = match kind {
                ManifoldKind::OuLine => 10.0,
                _ => 2.0 * std::f64::consts::PI,
            };
            Some(ManifoldSpec {
                kind,
                n,
                extent: s.positive("extent")?.unwrap_or(default_extent),
                spectrum_csv: s.parse("spectrum_csv", "true or false")?.unwrap_or(false),
            })
        }
    };

    let mode = match section("mode") {
        None => None,
        Some(s) => Some(match s.string("kind").as_deref() {
            Some("rho_inf") => CurvatureMode::RhoInfinity { rho: s.req_f64("rho")? },
            Some("zero_n") => CurvatureMode::ZeroN { dim: s.req_positive("n")? },
            Some(other) => {
                return Err(s.invalid("kind", &format!("must be `rho_inf` or `zero_n`, got `{other}`")));
            }
            None => return Err(s.missing("kind")),
        }),
    };

    let bridge = match section("bridge") {
        None => None,
        Some(s) => {
            let horizon = s.req_positive("horizon")?;
            let source = match (s.preset("mu")?, s.preset("nu")?, s.preset("f")?, s.preset("g")?, s.f64("dirac_point")?) {
                (Some(mu), Some(nu), None, None, None) => BridgeSource::Marginals {
                    mu,
                    nu,
                    tol: s.positive("ipfp_tol")?.unwrap_or(1e-12),
                    max_iter: s.usize("max_iter")?.unwrap_or(500),
                },
                (None, None, Some(f), Some(g), None) => BridgeSource::Potentials { f, g },
                (None, Some(nu), None, None, Some(point)) => BridgeSource::Dirac { point, nu },
                _ => {
                    return Err(Error::config(
                        Some(s.line),
                        None,
                        "[bridge] needs exactly one of: `mu` and `nu`; `f` and `g`; `dirac_point` and `nu`",
                    ))
                }
            };
            let time_nodes = s.usize("time_nodes")?.unwrap_or(crate::bridge::TIME_NODES);
            if time_nodes < 5 || time_nodes.is_multiple_of(2) {
                return Err(s.invalid("time_nodes", "must be odd and at least 5"));
            }
            Some(BridgeSpec {
                horizon,
                source,
                time_nodes,
            })
        }
    };

    let local = match section("local") {
        None => None,
        Some(s) => Some(LocalSpec {
            horizon: s.req_positive("horizon")?,
            g: s.preset("g")?.ok_or_else(|| s.missing("g"))?,
        }),
    };

    let toy = match section("toy") {
        None => None,
        Some(s) => {
            let dim = s.usize("dim")?.unwrap_or(1).max(1);
            let model = match s.string("model").as_deref() {
                Some("zero") => ToyModelSpec::Zero { dim },
                Some("quadratic") => ToyModelSpec::Quadratic { rho: s.req_f64("rho")?, dim },
                Some("neglog") => ToyModelSpec::NegLog { n: s.req_positive("n")? },
                Some(other) => {
                    return Err(s.invalid("model", &format!("must be zero, quadratic or neglog, got `{other}`")));
                }
                None => return Err(s.missing("model")),
            };
            let x = s.list("x")?.ok_or_else(|| s.missing("x"))?;
            let y = s.list("y")?.ok_or_else(|| s.missing("y"))?;
            Some(ToySpec {
                model,
                x,
                y,
                horizon: s.req_positive("horizon")?,
                m: s.usize("m")?.unwrap_or(256),
                perturbations: s.usize("perturbations")?.unwrap_or(0),
            })
        }
    };

    let delta = match section("delta") {
        None => None,
        Some(s) => {
            let pairs = match s.raw("pairs") {
                None => vec![LocalPair::GradientCommutation, LocalPair::Lsi],
                Some(e) => e
                    .value
                    .split(',')
                    .map(|p| p.trim().parse::<LocalPair>().map_err(|m| Error::config(Some(e.line), Some("pairs"), m)))
                    .collect::<Result<Vec<_>>>()?,
            };
            Some(DeltaSpec {
                pairs,
                point: s.f64("point")?.unwrap_or(0.0),
                g: s.preset("g")?.ok_or_else(|| s.missing("g"))?,
                horizon: s.req_positive("horizon")?,
                widths: s.list("widths")?.unwrap_or_else(|| vec![0.4, 0.2, 0.1, 0.05]),
                rho: s.f64("rho")?.unwrap_or(0.0),
            })
        }
    };

    let needs = |present: bool, what: &str| -> Result<()> {
        if present {
            Ok(())
        } else {
            Err(Error::config(None, None, format!("suite `{}` requires {what}", suite.as_str())))
        }
    };
    let space = bridge.is_some() || local.is_some() || delta.is_some();
    match suite {
        Suite::Toy => needs(toy.is_some(), "a [toy] section")?,
        Suite::Bridge => needs(bridge.is_some(), "a [bridge] section")?,
        Suite::Local => needs(local.is_some(), "a [local] section")?,
        Suite::Delta => needs(delta.is_some(), "a [delta] section")?,
        Suite::All => needs(space || toy.is_some(), "at least one experiment section")?,
    }
    if space {
        needs(manifold.is_some(), "a [manifold] section")?;
    }
    if bridge.is_some() || local.is_some() || toy.is_some() {
        needs(mode.is_some(), "a [mode] section")?;
    }
    let echo = raw
        .iter()
        .map(|(name, (_, entries))| {
            (
                name.clone(),
                entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect(),
            )
        })
        .collect();
    Ok(ExperimentConfig {
        id,
        description: scenario.string("description").unwrap_or_default(),
        suite,
        seed,
        output: scenario.string("output").map(PathBuf::from),
        manifold,
        mode,
        bridge,
        local,
        toy,
        delta,
        echo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[scenario]\nid = minimal\nsuite = bridge\n\n[manifold]\nkind = circle\nn = 256\n\n[mode]\nkind = zero_n\nn = 1\n\n[bridge]\nhorizon = 0.5\nmu = constant\nnu = constant\n";

    #[test]
    fn minimal_file_parses() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.suite, Suite::Bridge);
        assert_eq!(c.mode, Some(CurvatureMode::ZeroN { dim: 1.0 }));
        let m = c.manifold.unwrap();
        assert_eq!((m.kind, m.n), (ManifoldKind::Circle, 256));
        assert_eq!(c.bridge.unwrap().horizon, 0.5);
        assert_eq!(c.echo["manifold"]["n"], "256");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("kind = zero_n", "kind = zero_n\nrho_inf = 1");
        let err = parse_config_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Config { line: Some(11), key: Some(k), .. } if k == "rho_inf"), "{err}");
        assert!(err.to_string().contains("rho_inf"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn negative_horizon_is_rejected() {
        let err = parse_config_str(&MINIMAL.replace("horizon = 0.5", "horizon = -0.5")).unwrap_err();
        assert!(matches!(&err, Error::Config { key: Some(k), .. } if k == "horizon"), "{err}");
    }

    #[test]
    fn type_mismatch_and_bad_presets() {
        let err = parse_config_str(&MINIMAL.replace("n = 256", "n = many")).unwrap_err();
        assert!(matches!(&err, Error::Config { line: Some(7), .. }), "{err}");
        let err = parse_config_str(&MINIMAL.replace("mu = constant", "mu = sombrero")).unwrap_err();
        assert!(err.to_string().contains("unknown preset"));
        let err = parse_config_str(&MINIMAL.replace("mu = constant", "mu = bump center=1")).unwrap_err();
        assert!(err.to_string().contains("requires `width`"));
        assert!(parse_config_str(&MINIMAL.replace("[mode]\nkind = zero_n\nn = 1\n", "")).is_err());
        assert!(parse_config(Path::new("/nonexistent/otto.cfg")).is_err());
    }

    #[test]
    fn presets_parse_parameters() {
        let p = Preset::parse("cosine amplitude=-0.5 center=1").unwrap();
        assert_eq!(p.param("amplitude", 0.0), -0.5);
        assert_eq!(p.param("freq", 1.0), 1.0);
        assert!(Preset::parse("cosine amp=1").is_err());
        assert!(Preset::parse("cosine amplitude").is_err());
    }
}
