//! Gauss–Legendre rules and spectral antiderivatives on Legendre grids.
//!
//! Every integral in the crate goes through one of three rules:
//!
//! * [`GaussLegendre`] on a finite interval,
//! * [`sine_mapped`], the Gauss–Legendre rule after the substitution
//!   `t = mid + radius * sin(theta)`, which absorbs square-root endpoint
//!   behaviour (equilibrium densities, Chebyshev-type weights),
//! * [`LegendreGrid`], a Gauss–Legendre grid that also carries the Legendre
//!   table needed to integrate nodal data spectrally (cumulative integrals,
//!   the `epsilon` operator).

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on `P_n`.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, descending root order.
            let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights affinely mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let x = self.nodes.iter().map(|&t| mid + half * t).collect();
        let w = self.weights.iter().map(|&w| half * w).collect();
        (x, w)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

/// Rule on `[a, b]` obtained from `t = mid + r sin(theta)` with an `n`-point
/// Gauss–Legendre rule in `theta ∈ [-pi/2, pi/2]`.
///
/// Integrands of the form `g(t) sqrt((b - t)(t - a))` or `g(t) / sqrt(...)`
/// become smooth in `theta`, so the rule converges spectrally for both.
pub fn sine_mapped(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = GaussLegendre::new(n);
    let mid = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let (theta, wt) = gl.mapped(-0.5 * PI, 0.5 * PI);
    let x = theta.iter().map(|&th| mid + r * th.sin()).collect();
    let w = theta
        .iter()
        .zip(&wt)
        .map(|(&th, &w)| w * r * th.cos())
        .collect();
    (x, w)
}

/// Gauss–Legendre grid on `[lo, hi]` with its Legendre table, so that nodal
/// data can be integrated as the polynomial interpolant through the nodes.
#[derive(Debug, Clone)]
pub struct LegendreGrid {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    reference_nodes: Vec<f64>,
    reference_weights: Vec<f64>,
    /// `table[k * len + i] = P_k(x_i)` for `k = 0..=len`.
    table: Vec<f64>,
}

/// Legendre coefficients of a nodal function on a [`LegendreGrid`].
#[derive(Debug, Clone)]
pub struct LegendreExpansion {
    coeffs: Vec<f64>,
}

impl LegendreExpansion {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

fn legendre_all(n_max: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n_max >= 1 {
        out[1] = x;
    }
    for k in 2..=n_max {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

impl LegendreGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(hi > lo, "empty interval");
        let gl = GaussLegendre::new(n);
        let (nodes, weights) = gl.mapped(lo, hi);
        let mut table = vec![0.0; (n + 1) * n];
        let mut col = vec![0.0; n + 1];
        for (i, &x) in gl.nodes().iter().enumerate() {
            legendre_all(n, x, &mut col);
            for (k, &p) in col.iter().enumerate() {
                table[k * n + i] = p;
            }
        }
        Self {
            lo,
            hi,
            nodes,
            weights,
            reference_nodes: gl.nodes().to_vec(),
            reference_weights: gl.weights().to_vec(),
            table,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    fn to_reference(&self, x: f64) -> f64 {
        (2.0 * x - self.lo - self.hi) / (self.hi - self.lo)
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn expand(&self, values: &[f64]) -> LegendreExpansion {
        let n = self.len();
        assert_eq!(values.len(), n);
        let weighted: Vec<f64> = values
            .iter()
            .zip(&self.reference_weights)
            .map(|(v, w)| v * w)
            .collect();
        let coeffs = (0..n)
            .map(|k| {
                let row = &self.table[k * n..(k + 1) * n];
                let s: f64 = row.iter().zip(&weighted).map(|(p, v)| p * v).sum();
                (k as f64 + 0.5) * s
            })
            .collect();
        LegendreExpansion { coeffs }
    }

    /// `∫_lo^x f` for the interpolant `f`; clamps `x` to the grid interval.
    pub fn antiderivative_at(&self, expansion: &LegendreExpansion, x: f64) -> f64 {
        let t = self.to_reference(x).clamp(-1.0, 1.0);
        let n = expansion.coeffs.len();
        let mut p = vec![0.0; n + 1];
        legendre_all(n, t, &mut p);
        self.half_width() * antiderivative_sum(&expansion.coeffs, &p, t)
    }

    /// Row `r` with `∫_lo^x f = sum_j r_j f(x_j)` for the interpolant;
    /// `x` is clamped to the grid interval.
    pub fn antiderivative_row(&self, x: f64) -> Vec<f64> {
        let n = self.len();
        let t = self.to_reference(x).clamp(-1.0, 1.0);
        let mut p = vec![0.0; n + 1];
        legendre_all(n, t, &mut p);
        let mut row = vec![0.0; n];
        for k in 0..n {
            let ik = if k == 0 {
                t + 1.0
            } else {
                (p[k + 1] - p[k - 1]) / (2.0 * k as f64 + 1.0)
            };
            let c = ik * (k as f64 + 0.5) * self.half_width();
            let tk = &self.table[k * n..(k + 1) * n];
            for j in 0..n {
                row[j] += c * tk[j];
            }
        }
        for (r, w) in row.iter_mut().zip(&self.reference_weights) {
            *r *= w;
        }
        row
    }

    /// `∫_lo^{x_i} f` at every grid node.
    pub fn antiderivative_at_nodes(&self, values: &[f64]) -> Vec<f64> {
        let exp = self.expand(values);
        let n = self.len();
        let mut col = vec![0.0; n + 1];
        (0..n)
            .map(|i| {
                for (k, c) in col.iter_mut().enumerate() {
                    *c = self.table[k * n + i];
                }
                self.half_width() * antiderivative_sum(&exp.coeffs, &col, self.reference_nodes[i])
            })
            .collect()
    }

    /// Matrix `Q` with `(Q f)_i = ∫_lo^{x_i} f`, row-major `len × len`.
    pub fn antiderivative_matrix(&self) -> Vec<f64> {
        let n = self.len();
        // Q_ij = h * sum_k I_k(x_i) (k + 1/2) w_j P_k(x_j)
        let mut integrals = vec![0.0; n * n]; // I_k(x_i) at [i * n + k]
        for i in 0..n {
            let t = self.reference_nodes[i];
            for k in 0..n {
                integrals[i * n + k] = if k == 0 {
                    t + 1.0
                } else {
                    (self.table[(k + 1) * n + i] - self.table[(k - 1) * n + i])
                        / (2.0 * k as f64 + 1.0)
                };
            }
        }
        let mut analysis = vec![0.0; n * n]; // [k * n + j]
        for k in 0..n {
            for j in 0..n {
                analysis[k * n + j] =
                    (k as f64 + 0.5) * self.reference_weights[j] * self.table[k * n + j];
            }
        }
        let h = self.half_width();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            let row_i = &integrals[i * n..(i + 1) * n];
            let out = &mut q[i * n..(i + 1) * n];
            for (k, &ik) in row_i.iter().enumerate() {
                if ik == 0.0 {
                    continue;
                }
                let a = &analysis[k * n..(k + 1) * n];
                for (o, &ak) in out.iter_mut().zip(a) {
                    *o += ik * ak;
                }
            }
            for o in out.iter_mut() {
                *o *= h;
            }
        }
        q
    }
}

/// `sum_k c_k ∫_{-1}^t P_k` given `p = [P_0(t), ..., P_n(t)]`.
fn antiderivative_sum(coeffs: &[f64], p: &[f64], t: f64) -> f64 {
    let mut s = coeffs[0] * (t + 1.0);
    for k in 1..coeffs.len() {
        s += coeffs[k] * (p[k + 1] - p[k - 1]) / (2.0 * k as f64 + 1.0);
    }
    s
}
