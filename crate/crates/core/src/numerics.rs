//! Small numerical kernels shared across modules: finite-difference weights,
//! uniform-grid quadrature and the curvature coefficients with their ρ → 0
//! limits.

/// Below this value of |ρT| the curvature coefficients switch to their series
/// expansion.
pub const SERIES_CUTOFF: f64 = 1e-8;

/// Finite-difference weights (Fornberg's recursion).
///
/// Returns `w[k][j]`: the weight of sample `nodes[j]` in the approximation of
/// the `k`-th derivative at `z`, for `k = 0..=max_order`.
pub fn fornberg_weights(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Banded differentiation operator on a set of (sorted) nodes using a sliding
/// stencil of `width` points, shifted inward at the ends.
#[derive(Debug, Clone)]
pub struct Stencil {
    starts: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl Stencil {
    pub fn new(nodes: &[f64], order: usize, width: usize) -> Self {
        let n = nodes.len();
        assert!(width <= n, "stencil wider than grid");
        let half = width / 2;
        let mut starts = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let s = i.saturating_sub(half).min(n - width);
            let w = fornberg_weights(nodes[i], &nodes[s..s + width], order);
            starts.push(s);
            weights.push(w[order].clone());
        }
        Stencil { starts, weights }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.starts
            .iter()
            .zip(&self.weights)
            .map(|(&s, w)| w.iter().zip(&values[s..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Dense matrix form, used by tests and by the spectrum oracle.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.starts.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, (&s, w)) in self.starts.iter().zip(&self.weights).enumerate() {
            for (j, &v) in w.iter().enumerate() {
                m[(i, s + j)] = v;
            }
        }
        m
    }
}

/// Composite Simpson rule on uniformly spaced samples. An odd number of
/// intervals closes with a 3/8 panel.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, 0.0)
            } else {
                let k = n - 4;
                (
                    k,
                    3.0 * h / 8.0
                        * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]),
                )
            };
            let mut acc = 0.0;
            let mut i = 0;
            while i + 2 <= simpson_end {
                acc += values[i] + 4.0 * values[i + 1] + values[i + 2];
                i += 2;
            }
            acc * h / 3.0 + tail
        }
    }
}

/// Running integral of uniformly spaced samples, fourth order in `h`.
///
/// Each interval uses the cubic through its four nearest samples. Increments
/// of a nonnegative integrand are clamped at zero so the result is
/// nondecreasing whenever the integrand is.
pub fn cumulative_integral(values: &[f64], h: f64, monotone: bool) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    for j in 0..n - 1 {
        let inc = if n < 4 {
            0.5 * h * (values[j] + values[j + 1])
        } else if j == 0 {
            h / 24.0 * (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3])
        } else if j == n - 2 {
            h / 24.0
                * (9.0 * values[n - 1] + 19.0 * values[n - 2] - 5.0 * values[n - 3]
                    + values[n - 4])
        } else {
            h / 24.0
                * (-values[j - 1] + 13.0 * values[j] + 13.0 * values[j + 1] - values[j + 2])
        };
        let inc = if monotone { inc.max(0.0) } else { inc };
        out[j + 1] = out[j] + inc;
    }
    out
}

/// `(1 − e^{−2ρT}) / (2ρ)`, equal to `T` at ρ = 0.
pub fn lsi_coefficient(rho: f64, horizon: f64) -> f64 {
    let x = 2.0 * rho * horizon;
    if (rho * horizon).abs() < SERIES_CUTOFF {
        horizon * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        -(-x).exp_m1() / (2.0 * rho)
    }
}

/// `(e^{2ρT} − 1) / (2ρ)`, equal to `T` at ρ = 0.
pub fn reverse_lsi_coefficient(rho: f64, horizon: f64) -> f64 {
    let x = 2.0 * rho * horizon;
    if (rho * horizon).abs() < SERIES_CUTOFF {
        horizon * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        x.exp_m1() / (2.0 * rho)
    }
}

/// Maximum of |a − b| over paired slices.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
