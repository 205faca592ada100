//! Discretized model spaces carrying a heat semigroup, its generator and the
//! carré du champ operators.
//!
//! Three kinds are built in: the circle and the flat two-torus (uniform
//! periodic grids, real Fourier spectral calculus) and the Ornstein-Uhlenbeck
//! line (uniform grid on [−R, R] with Gaussian weights). Functions are plain
//! grid samples; on the torus they are stored row-major, `i·n + j` with `i`
//! indexing the first axis.

mod fourier;
mod ou;

use std::fmt;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::report::{write_csv, CurvatureMode, InequalityReport, Location, ReportMeta};
use fourier::FourierAxis;
use ou::OuAxis;

/// Relative undershoot below which a negative heat value of a nonnegative
/// field is clamped to zero instead of rejected.
pub const CLAMP_THRESHOLD: f64 = 1e-12;

/// Mass tolerance of a [`Density`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Pointwise tolerance of [`check_cd`], relative to `1 + |Γ₂|`.
pub const CD_TOLERANCE: f64 = 1e-8;

const MIN_POINTS: usize = 8;
const MIN_HALF_WIDTH: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ManifoldKind {
    Circle,
    Torus2d,
    OuLine,
}

impl ManifoldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Torus2d => "torus2d",
            ManifoldKind::OuLine => "ou_line",
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManifoldKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "circle" => Ok(ManifoldKind::Circle),
            "torus2d" | "torus" => Ok(ManifoldKind::Torus2d),
            "ou_line" | "ou" => Ok(ManifoldKind::OuLine),
            other => Err(format!("unknown manifold kind `{other}` (circle, torus2d, ou_line)")),
        }
    }
}

#[derive(Debug, Clone)]
enum Axis {
    Fourier(Arc<FourierAxis>),
    Ou(Box<OuAxis>),
}

/// A discretized model space with its quadrature and spectral data.
#[derive(Debug, Clone)]
pub struct GridManifold {
    kind: ManifoldKind,
    n: usize,
    extent: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    axis: Axis,
}

/// Builds a manifold with `n` points per axis.
///
/// `extent` is the period `L` for the circle and torus, and the truncation
/// half-width `R` for the OU line.
pub fn build_grid(kind: ManifoldKind, n: usize, extent: f64) -> Result<GridManifold> {
    if n < MIN_POINTS {
        return Err(Error::Construction {
            param: "n",
            reason: format!("n too small: {n} (minimum {MIN_POINTS})"),
        });
    }
    let param = if kind == ManifoldKind::OuLine { "half_width" } else { "length" };
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::Construction {
            param,
            reason: format!("must be positive and finite, got {extent}"),
        });
    }
    match kind {
        ManifoldKind::Circle | ManifoldKind::Torus2d => {
            let ax = FourierAxis::new(n, extent);
            let coords: Vec<f64> = (0..n).map(|i| i as f64 * ax.h).collect();
            let (weights, eigenvalues) = if kind == ManifoldKind::Circle {
                (vec![ax.h; n], ax.eigenvalues.clone())
            } else {
                let ev = ax
                    .eigenvalues
                    .iter()
                    .flat_map(|&a| ax.eigenvalues.iter().map(move |&b| a + b))
                    .collect();
                (vec![ax.h * ax.h; n * n], ev)
            };
            Ok(GridManifold {
                kind,
                n,
                extent,
                coords,
                weights,
                eigenvalues,
                axis: Axis::Fourier(Arc::new(ax)),
            })
        }
        ManifoldKind::OuLine => {
            if extent < MIN_HALF_WIDTH {
                return Err(Error::Construction {
                    param,
                    reason: format!("truncation half-width {extent} is below {MIN_HALF_WIDTH}"),
                });
            }
            let ax = OuAxis::new(n, extent);
            Ok(GridManifold {
                kind,
                n,
                extent,
                coords: ax.x.clone(),
                weights: ax.weights.clone(),
                eigenvalues: ax.eigenvalues.clone(),
                axis: Axis::Ou(Box::new(ax)),
            })
        }
    }
}

impl GridManifold {
    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    /// Points per axis.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Torus2d => 2,
            _ => 1,
        }
    }

    /// Period (circle, torus) or truncation half-width (OU line).
    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        match &self.axis {
            Axis::Fourier(ax) => ax.h,
            Axis::Ou(ax) => ax.h,
        }
    }

    /// Coordinates along one axis.
    pub fn axis_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total reference mass Σwᵢ.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Curvature-dimension parameters `(ρ, n)` the space satisfies.
    pub fn curvature_ref(&self) -> (f64, f64) {
        match self.kind {
            ManifoldKind::Circle => (0.0, 1.0),
            ManifoldKind::Torus2d => (0.0, 2.0),
            ManifoldKind::OuLine => (1.0, f64::INFINITY),
        }
    }

    /// Refuses a curvature regime the space does not satisfy: CD(ρ, n) holds
    /// when ρ ≤ ρ_ref and n ≥ n_ref.
    pub fn require_mode(&self, mode: CurvatureMode) -> Result<()> {
        let (rho_ref, n_ref) = self.curvature_ref();
        let (rho, n) = match mode {
            CurvatureMode::RhoInfinity { rho } => (rho, f64::INFINITY),
            CurvatureMode::ZeroN { dim } => (0.0, dim),
        };
        if rho <= rho_ref && n >= n_ref {
            return Ok(());
        }
        let n_ref = if n_ref.is_finite() { n_ref.to_string() } else { "inf".into() };
        Err(Error::Refused(format!(
            "{} only satisfies CD(ρ, n) for ρ ≤ {rho_ref} and n ≥ {n_ref}; requested {}",
            self.kind,
            mode.label()
        )))
    }

    /// Eigenvalues of the generator held as spectral data.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Coordinates of point `i` (one entry per dimension).
    pub fn point(&self, i: usize) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus2d => vec![self.coords[i / self.n], self.coords[i % self.n]],
            _ => vec![self.coords[i]],
        }
    }

    /// Grid index nearest to the given coordinates.
    pub fn nearest_index(&self, p: &[f64]) -> usize {
        let nearest = |x: f64| -> usize {
            match self.kind {
                ManifoldKind::OuLine => {
                    let k = ((x + self.extent) / self.spacing()).round();
                    k.clamp(0.0, (self.n - 1) as f64) as usize
                }
                _ => {
                    let k = (x.rem_euclid(self.extent) / self.spacing()).round() as usize;
                    k % self.n
                }
            }
        };
        match self.kind {
            ManifoldKind::Torus2d => nearest(p[0]) * self.n + nearest(p.get(1).copied().unwrap_or(0.0)),
            _ => nearest(p[0]),
        }
    }

    /// Indices used by pointwise checks. On the OU line the outer tenth of the
    /// grid on each side is excluded.
    pub fn interior(&self) -> Vec<usize> {
        match self.kind {
            ManifoldKind::OuLine => {
                let cut = self.n.div_ceil(10);
                (cut..self.n - cut).collect()
            }
            _ => (0..self.len()).collect(),
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<ScalarField> {
        self.check_len(values.len())?;
        ScalarField::new(values)
    }

    pub fn from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Result<ScalarField> {
        self.field((0..self.len()).map(|i| f(&self.point(i))).collect())
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField(vec![c; self.len()])
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// The heat operator `P_t`, ready for repeated application.
    pub fn heat_operator(&self, t: f64) -> Result<HeatOperator> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain(format!("heat time must be finite and nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(HeatOperator {
                time: 0.0,
                len: self.len(),
                repr: HeatRepr::Identity,
            });
        }
        let repr = match &self.axis {
            Axis::Fourier(ax) => HeatRepr::Spectral {
                axis: Arc::clone(ax),
                decay: ax.decay(t),
                axes: self.dim(),
            },
            Axis::Ou(ax) => HeatRepr::Kernel(ax.kernel(t)?),
        };
        Ok(HeatOperator {
            time: t,
            len: self.len(),
            repr,
        })
    }

    /// Heat kernel column `p_s(·, y)` with respect to the reference measure,
    /// so that `∫ p_s(x, y) φ(x) dx = P_s φ(y)`.
    pub fn heat_column(&self, y: usize, s: f64) -> Result<ScalarField> {
        if y >= self.len() {
            return Err(Error::Domain(format!("point index {y} out of range")));
        }
        let mut delta = vec![0.0; self.len()];
        delta[y] = 1.0 / self.weights[y];
        self.heat_operator(s)?.apply(&ScalarField(delta))
    }

    /// Largest relative error of the eigenvalues recovered by applying the
    /// generator to each stored eigenfunction and projecting back.
    pub fn spectral_residual(&self) -> f64 {
        let (basis, eig, w): (&DMatrix<f64>, &[f64], Vec<f64>) = match &self.axis {
            Axis::Fourier(ax) => (&ax.basis, &ax.eigenvalues, vec![ax.h; self.n]),
            Axis::Ou(ax) => (&ax.hermite, &ax.eigenvalues, ax.weights.clone()),
        };
        let mut worst: f64 = 0.0;
        for (k, &lambda) in eig.iter().enumerate().take(basis.ncols()) {
            let col: Vec<f64> = basis.column(k).iter().copied().collect();
            let lf = match &self.axis {
                Axis::Fourier(ax) => (&ax.lap * DVector::from_vec(col.clone())).as_slice().to_vec(),
                Axis::Ou(ax) => ax.generator(&col),
            };
            let num: f64 = (0..col.len()).map(|i| w[i] * lf[i] * col[i]).sum();
            let den: f64 = (0..col.len()).map(|i| w[i] * col[i] * col[i]).sum();
            let got = num / den;
            worst = worst.max((got - lambda).abs() / lambda.abs().max(1.0));
        }
        worst
    }

    /// Writes the spectral data as CSV with columns `index,eigenvalue`.
    pub fn write_spectrum_csv(&self, path: &Path) -> Result<()> {
        let mut ev = self.eigenvalues.clone();
        ev.sort_by(|a, b| b.total_cmp(a));
        write_csv(
            path,
            &["index", "eigenvalue"],
            ev.into_iter().enumerate().map(|(i, v)| vec![i as f64, v]),
        )
    }

    fn partials(&self, f: &[f64]) -> Vec<Vec<f64>> {
        match &self.axis {
            Axis::Ou(ax) => vec![ax.gradient(f)],
            Axis::Fourier(ax) => {
                if self.dim() == 1 {
                    vec![(&ax.deriv * DVector::from_column_slice(f)).as_slice().to_vec()]
                } else {
                    let n = self.n;
                    let fm = DMatrix::from_row_slice(n, n, f);
                    let dx = &ax.deriv * &fm;
                    let dy = &fm * ax.deriv.transpose();
                    vec![row_major(&dx), row_major(&dy)]
                }
            }
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Grid samples of a real function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    /// Wraps values after checking that they are finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "scalar field",
                index: i,
            });
        }
        Ok(ScalarField(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index and value of the first nonpositive entry, if any.
    pub fn first_nonpositive(&self) -> Option<(usize, f64)> {
        self.0.iter().position(|&v| v <= 0.0 || v.is_nan()).map(|i| (i, self.0[i]))
    }

    pub(crate) fn require_positive(&self, what: &'static str) -> Result<()> {
        match self.first_nonpositive() {
            Some((index, value)) => Err(Error::NonPositive { what, index, value }),
            None => Ok(()),
        }
    }
}

impl Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Nonnegative grid density with unit mass against the quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Density(ScalarField);

impl Density {
    /// Checks nonnegativity and unit mass.
    pub fn new(m: &GridManifold, values: Vec<f64>) -> Result<Self> {
        let field = m.field(values)?;
        if let Some(i) = field.iter().position(|&v| v < 0.0) {
            return Err(Error::NonPositive {
                what: "density",
                index: i,
                value: field[i],
            });
        }
        let mass = integrate(m, &field)?;
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Domain(format!("density mass is {mass}, expected 1")));
        }
        Ok(Density(field))
    }

    /// Rescales nonnegative values to unit mass.
    pub fn normalized(m: &GridManifold, values: Vec<f64>) -> Result<Self> {
        let field = m.field(values)?;
        if let Some(i) = field.iter().position(|&v| v < 0.0) {
            return Err(Error::NonPositive {
                what: "density",
                index: i,
                value: field[i],
            });
        }
        let mass = integrate(m, &field)?;
        if mass <= 0.0 {
            return Err(Error::Numerical("density has zero mass".into()));
        }
        Ok(Density(field.map(|v| v / mass)))
    }

    pub fn uniform(m: &GridManifold) -> Self {
        let v = 1.0 / m.volume();
        Density(m.constant(v))
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }
}

impl Deref for Density {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
enum HeatRepr {
    Identity,
    Spectral {
        axis: Arc<FourierAxis>,
        decay: Vec<f64>,
        axes: usize,
    },
    Kernel(DMatrix<f64>),
}

/// Precomputed `P_t` for one time `t`.
#[derive(Debug, Clone)]
pub struct HeatOperator {
    time: f64,
    len: usize,
    repr: HeatRepr,
}

impl HeatOperator {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn apply(&self, f: &[f64]) -> Result<ScalarField> {
        self.apply_clamped(f).map(|(out, _)| out)
    }

    /// Applies `P_t` and returns the result with the largest undershoot that
    /// was clamped to zero (zero when nothing was clamped).
    ///
    /// Clamping only happens for nonnegative input. Undershoot larger than
    /// [`CLAMP_THRESHOLD`] relative to `max(1, ‖f‖∞)` is an error.
    pub fn apply_clamped(&self, f: &[f64]) -> Result<(ScalarField, f64)> {
        if f.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                got: f.len(),
            });
        }
        if is_constant(f) {
            return Ok((ScalarField(f.to_vec()), 0.0));
        }
        let mut out = match &self.repr {
            HeatRepr::Identity => return Ok((ScalarField(f.to_vec()), 0.0)),
            HeatRepr::Spectral { axis, decay, axes: 1 } => axis.filter(decay, f),
            HeatRepr::Spectral { axis, decay, .. } => {
                let n = axis.basis.nrows();
                row_major(&axis.filter2(decay, &DMatrix::from_row_slice(n, n, f)))
            }
            HeatRepr::Kernel(k) => (k * DVector::from_column_slice(f)).as_slice().to_vec(),
        };
        let mut clamped: f64 = 0.0;
        if f.iter().all(|&v| v >= 0.0) {
            let scale = f.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for (i, v) in out.iter_mut().enumerate() {
                if *v < 0.0 {
                    if *v < -CLAMP_THRESHOLD * scale {
                        return Err(Error::Numerical(format!(
                            "heat semigroup lost positivity at point {i}: {:e} at t = {}",
                            *v, self.time
                        )));
                    }
                    clamped = clamped.max(-*v);
                    *v = 0.0;
                }
            }
            if clamped > 0.0 {
                debug!("clamped heat undershoot {clamped:e} at t = {}", self.time);
            }
        }
        Ok((ScalarField::new(out)?, clamped))
    }
}

/// `P_t f`.
pub fn heat_apply(m: &GridManifold, t: f64, f: &ScalarField) -> Result<ScalarField> {
    m.check_len(f.len())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    m.heat_operator(t)?.apply(f)
}

/// Evolves a density by the dual semigroup. Densities are taken relative to
/// the reversible reference measure, so this is `P_t` on the density values.
pub fn dual_apply(m: &GridManifold, t: f64, mu: &Density) -> Result<Density> {
    let out = heat_apply(m, t, mu.field())?;
    let mass = integrate(m, &out)?;
    if (mass - 1.0).abs() > 1e-10 {
        warn!("dual semigroup mass drift {:e} at t = {t}", mass - 1.0);
    }
    Ok(Density(out))
}

/// The generator applied to `f`: Δf on the circle and torus, f″ − x f′ on the
/// OU line.
pub fn apply_generator(m: &GridManifold, f: &ScalarField) -> Result<ScalarField> {
    m.check_len(f.len())?;
    if is_constant(f) {
        return Ok(m.constant(0.0));
    }
    let out = match &m.axis {
        Axis::Ou(ax) => ax.generator(f),
        Axis::Fourier(ax) if m.dim() == 1 => {
            (&ax.lap * DVector::from_column_slice(f)).as_slice().to_vec()
        }
        Axis::Fourier(ax) => {
            let n = m.n;
            let fm = DMatrix::from_row_slice(n, n, f);
            row_major(&(&ax.lap * &fm + &fm * ax.lap.transpose()))
        }
    };
    ScalarField::new(out)
}

/// `Γ(f, g) = ∇f·∇g`.
pub fn gamma(m: &GridManifold, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    m.check_len(f.len())?;
    m.check_len(g.len())?;
    if is_constant(f) || is_constant(g) {
        return Ok(m.constant(0.0));
    }
    let pf = m.partials(f);
    let pg = if f == g { pf.clone() } else { m.partials(g) };
    let mut out = vec![0.0; f.len()];
    for (a, b) in pf.iter().zip(&pg) {
        for i in 0..out.len() {
            out[i] += a[i] * b[i];
        }
    }
    ScalarField::new(out)
}

/// `Γ(f) = Γ(f, f)`.
pub fn gamma_sq(m: &GridManifold, f: &ScalarField) -> Result<ScalarField> {
    gamma(m, f, f)
}

/// `Γ₂(f) = ½ LΓ(f) − Γ(f, Lf)`.
pub fn gamma2(m: &GridManifold, f: &ScalarField) -> Result<ScalarField> {
    let gf = gamma_sq(m, f)?;
    let lg = apply_generator(m, &gf)?;
    let lf = apply_generator(m, f)?;
    let cross = gamma(m, f, &lf)?;
    Ok(lg.zip_map(&cross, |a, b| 0.5 * a - b))
}

/// Checks `Γ₂(f) ≥ ρΓ(f) + (Lf)²/n` pointwise (interior points only on the
/// OU line) for every trial field and reports the worst point. `dim` may be
/// `f64::INFINITY`.
pub fn check_cd(
    m: &GridManifold,
    rho: f64,
    dim: f64,
    trials: &[ScalarField],
) -> Result<InequalityReport> {
    if trials.is_empty() {
        return Err(Error::Empty("no trial fields for the curvature check"));
    }
    if dim.is_nan() || dim <= 0.0 {
        return Err(Error::Domain(format!("dimension must be positive, got {dim}")));
    }
    let interior = m.interior();
    let mut worst: Option<(f64, usize, f64, f64)> = None;
    for f in trials {
        let g2 = gamma2(m, f)?;
        let g = gamma_sq(m, f)?;
        let lf = apply_generator(m, f)?;
        for &i in &interior {
            let lhs = rho * g[i] + lf[i] * lf[i] / dim;
            let rhs = g2[i];
            let score = (rhs - lhs) / (1.0 + rhs.abs());
            if worst.is_none_or(|w| score < w.0) {
                worst = Some((score, i, lhs, rhs));
            }
        }
    }
    let (_, i, lhs, rhs) = worst.expect("trial set is nonempty");
    let dim_meta = if dim.is_finite() { Some(dim) } else { None };
    Ok(InequalityReport::new(
        format!("CD({rho},{dim})"),
        Location::Point(i),
        lhs,
        rhs,
        CD_TOLERANCE * (1.0 + rhs.abs()),
    )
    .with_meta(ReportMeta {
        rho: Some(rho),
        dim: dim_meta,
        ..ReportMeta::default()
    }))
}

/// `Σ wᵢ fᵢ`.
pub fn integrate(m: &GridManifold, f: &[f64]) -> Result<f64> {
    m.check_len(f.len())?;
    Ok(m.weights.iter().zip(f).map(|(w, v)| w * v).sum())
}

/// `∫ log(dμ/dx) dμ` with `0·log 0 = 0`.
pub fn entropy(m: &GridManifold, mu: &Density) -> Result<f64> {
    integrate(
        m,
        &mu.iter()
            .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
            .collect::<Vec<_>>(),
    )
}

/// `∫ Γ(log dμ/dx) dμ`.
pub fn fisher_info(m: &GridManifold, mu: &Density) -> Result<f64> {
    mu.field().require_positive("density")?;
    let log_mu = mu.field().map(f64::ln);
    let g = gamma_sq(m, &log_mu)?;
    integrate(m, &g.zip_map(mu.field(), |a, b| a * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(n: usize) -> GridManifold {
        build_grid(ManifoldKind::Circle, n, 2.0 * PI).unwrap()
    }

    fn field(m: &GridManifold, f: impl Fn(f64) -> f64) -> ScalarField {
        m.from_fn(|p| f(p[0])).unwrap()
    }

    #[test]
    fn circle_eigenvalues_for_eight_points() {
        let m = circle(8);
        let mut ev = m.eigenvalues().to_vec();
        ev.sort_by(|a, b| b.total_cmp(a));
        let expected = [0.0, -1.0, -1.0, -4.0, -4.0, -9.0, -9.0, -16.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(ev.iter().filter(|&&v| v == 0.0).count(), 1);
    }

    #[test]
    fn circle_eigenvalues_match_dense_diagonalization() {
        let m = circle(16);
        let Axis::Fourier(ax) = &m.axis else { unreachable!() };
        let sym = (&ax.lap + ax.lap.transpose()) * 0.5;
        let mut dense: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(|a, b| b.total_cmp(a));
        let mut ev = m.eigenvalues().to_vec();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ev.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn ou_spectrum_by_dense_diagonalization() {
        let m = build_grid(ManifoldKind::OuLine, 64, 6.0).unwrap();
        let Axis::Ou(ax) = &m.axis else { unreachable!() };
        let l = ax.d2.to_dense() - DMatrix::from_diagonal(&DVector::from_column_slice(&ax.x)) * ax.d1.to_dense();
        let mut ev: Vec<_> = l.complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.re.total_cmp(&a.re));
        for (k, z) in ev.iter().take(4).enumerate() {
            assert!((z.re + k as f64).abs() < 1e-6 && z.im.abs() < 1e-6, "{k}: {z}");
        }
        assert_eq!(&m.eigenvalues()[..4], &[0.0, -1.0, -2.0, -3.0]);
    }

    #[test]
    fn construction_errors_name_the_parameter() {
        let err = build_grid(ManifoldKind::Circle, 0, 2.0 * PI).unwrap_err();
        assert!(err.to_string().contains("n too small"));
        match build_grid(ManifoldKind::Torus2d, 16, -1.0).unwrap_err() {
            Error::Construction { param, .. } => assert_eq!(param, "length"),
            e => panic!("{e}"),
        }
        match build_grid(ManifoldKind::OuLine, 64, 0.0).unwrap_err() {
            Error::Construction { param, .. } => assert_eq!(param, "half_width"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn curvature_guard() {
        let c = circle(16);
        assert!(c.require_mode(CurvatureMode::ZeroN { dim: 1.0 }).is_ok());
        assert!(c.require_mode(CurvatureMode::RhoInfinity { rho: 0.0 }).is_ok());
        assert!(matches!(c.require_mode(CurvatureMode::RhoInfinity { rho: 1.0 }), Err(Error::Refused(_))));
        let t = build_grid(ManifoldKind::Torus2d, 16, 2.0 * PI).unwrap();
        assert!(t.require_mode(CurvatureMode::ZeroN { dim: 1.0 }).is_err());
        let o = build_grid(ManifoldKind::OuLine, 64, 6.0).unwrap();
        assert!(o.require_mode(CurvatureMode::RhoInfinity { rho: 1.0 }).is_ok());
        assert!(o.require_mode(CurvatureMode::RhoInfinity { rho: 1.5 }).is_err());
        assert!(o.require_mode(CurvatureMode::ZeroN { dim: 100.0 }).is_err());
    }

    #[test]
    fn weights_sum_to_volume() {
        assert!((circle(64).volume() - 2.0 * PI).abs() < 1e-12);
        let t = build_grid(ManifoldKind::Torus2d, 16, 2.0 * PI).unwrap();
        assert!((t.volume() - 4.0 * PI * PI).abs() < 1e-11);
        let o = build_grid(ManifoldKind::OuLine, 64, 6.0).unwrap();
        assert!((o.volume() - 1.0).abs() < 1e-14);
        assert!(o.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn spectral_reconstruction() {
        assert!(circle(32).spectral_residual() < 1e-10);
        let o = build_grid(ManifoldKind::OuLine, 64, 6.0).unwrap();
        assert!(o.spectral_residual() < 1e-10, "{}", o.spectral_residual());
    }

    #[test]
    fn heat_identity_and_constants() {
        let m = circle(32);
        let f = field(&m, |x| x.sin() + 0.3);
        assert_eq!(heat_apply(&m, 0.0, &f).unwrap(), f);
        let one = m.constant(1.0);
        assert_eq!(heat_apply(&m, 0.7, &one).unwrap(), one);
        assert!(matches!(heat_apply(&m, -0.1, &f), Err(Error::Domain(_))));
    }

    #[test]
    fn heat_decays_cos3() {
        let m = circle(64);
        let f = field(&m, |x| (3.0 * x).cos());
        let out = heat_apply(&m, 0.2, &f).unwrap();
        for (i, v) in out.iter().enumerate() {
            let x = m.axis_coords()[i];
            assert!((v - (-1.8f64).exp() * (3.0 * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn generator_and_gamma_on_circle() {
        let m = circle(64);
        let c = field(&m, f64::cos);
        let lc = apply_generator(&m, &c).unwrap();
        for i in 0..m.len() {
            assert!((lc[i] + c[i]).abs() < 1e-10);
        }
        let s = field(&m, f64::sin);
        let g = gamma_sq(&m, &s).unwrap();
        let g2 = gamma2(&m, &s).unwrap();
        for (i, &x) in m.axis_coords().iter().enumerate() {
            assert!((g[i] - x.cos().powi(2)).abs() < 1e-10);
            assert!((g2[i] - x.sin().powi(2)).abs() < 1e-9);
        }
        assert!(apply_generator(&m, &m.constant(3.0)).unwrap().iter().all(|&v| v == 0.0));
        assert!(gamma2(&m, &m.constant(3.0)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ou_generator_on_linear_field() {
        let m = build_grid(ManifoldKind::OuLine, 128, 8.0).unwrap();
        let x = field(&m, |x| x);
        let lx = apply_generator(&m, &x).unwrap();
        for i in m.interior() {
            assert!((lx[i] + x[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn ou_gamma2_dominates_gamma() {
        let m = build_grid(ManifoldKind::OuLine, 256, 10.0).unwrap();
        let f = field(&m, f64::sin);
        let r = check_cd(&m, 1.0, f64::INFINITY, &[f]).unwrap();
        assert!(r.slack >= -1e-6, "{r:?}");
    }

    #[test]
    fn cd_examples_on_circle() {
        let m = circle(64);
        let s = field(&m, f64::sin);
        let r = check_cd(&m, 0.0, 1.0, std::slice::from_ref(&s)).unwrap();
        assert!(r.pass && r.slack.abs() < 1e-9);
        let r = check_cd(&m, 1.0, 1.0, std::slice::from_ref(&s)).unwrap();
        assert!(!r.pass);
        assert!((r.slack + 1.0).abs() < 1e-9);
        let r = check_cd(&m, -1e6, f64::INFINITY, &[s]).unwrap();
        assert!(r.pass);
        assert!(check_cd(&m, 0.0, 1.0, &[]).is_err());
    }

    #[test]
    fn integrals_on_circle() {
        let m = circle(64);
        assert!((integrate(&m, &m.constant(1.0)).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!((integrate(&m, &field(&m, |x| x.cos().powi(2))).unwrap() - PI).abs() < 1e-10);
        assert!(integrate(&m, &field(&m, f64::sin)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_and_fisher() {
        let m = circle(64);
        let u = Density::uniform(&m);
        assert!((entropy(&m, &u).unwrap() + (2.0 * PI).ln()).abs() < 1e-10);
        assert_eq!(fisher_info(&m, &u).unwrap(), 0.0);

        let mu = Density::normalized(&m, field(&m, |x| 1.0 + 0.5 * x.cos()).into_vec()).unwrap();
        let z = 2.0 * PI;
        let oracle: f64 = m
            .axis_coords()
            .iter()
            .map(|&x| {
                let p = (1.0 + 0.5 * x.cos()) / z;
                let dp = -0.5 * x.sin() / z;
                dp * dp / p * m.spacing()
            })
            .sum();
        assert!((fisher_info(&m, &mu).unwrap() - oracle).abs() < 1e-8);

        let mut zeros = field(&m, |x| (x.cos()).max(0.0)).into_vec();
        zeros[0] = 0.0;
        let z = Density::normalized(&m, zeros).unwrap();
        assert!(entropy(&m, &z).unwrap().is_finite());
        assert!(matches!(fisher_info(&m, &z), Err(Error::NonPositive { .. })));
    }

    #[test]
    fn entropy_is_resolution_consistent() {
        let e = |n: usize| {
            let m = circle(n);
            let mu = Density::normalized(&m, field(&m, |x| (0.8 * x.cos()).exp()).into_vec()).unwrap();
            entropy(&m, &mu).unwrap()
        };
        assert!((e(32) - e(64)).abs() < 1e-12);
    }

    #[test]
    fn torus_product_structure() {
        let m = build_grid(ManifoldKind::Torus2d, 16, 2.0 * PI).unwrap();
        let f = m.from_fn(|p| p[0].cos() * (2.0 * p[1]).sin()).unwrap();
        let lf = apply_generator(&m, &f).unwrap();
        let hf = heat_apply(&m, 0.1, &f).unwrap();
        let g = gamma_sq(&m, &f).unwrap();
        for i in 0..m.len() {
            let p = m.point(i);
            assert!((lf[i] + 5.0 * f[i]).abs() < 1e-10);
            assert!((hf[i] - (-0.5f64).exp() * f[i]).abs() < 1e-12);
            let exact = (p[0].sin() * (2.0 * p[1]).sin()).powi(2)
                + (2.0 * p[0].cos() * (2.0 * p[1]).cos()).powi(2);
            assert!((g[i] - exact).abs() < 1e-10);
        }
        assert_eq!(m.nearest_index(&m.point(37)), 37);
    }

    #[test]
    fn dual_apply_preserves_mass_of_a_bump() {
        let m = circle(128);
        let bump = field(&m, |x| (((x - PI).cos() - 1.0) / 0.01).exp());
        let mu = Density::normalized(&m, bump.into_vec()).unwrap();
        let out = dual_apply(&m, 0.5, &mu).unwrap();
        assert!((integrate(&m, &out).unwrap() - 1.0).abs() < 1e-12);
        let uni = Density::uniform(&m);
        assert_eq!(dual_apply(&m, 0.3, &uni).unwrap(), uni);
    }
}
