//! Orthonormal functions `psi_l = p_l e^{-nV/2}` for the varying weight
//! `e^{-nV}`, the Christoffel–Darboux kernel and its restriction to an
//! interval.
//!
//! Raw `p_l` overflow long before `l ~ n`, so every recurrence here runs on
//! a mantissa with a separate log-scale exponent per evaluation point.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{
    equilibrium_density, solve_one_cut_support, EquilibriumMeasure, PolynomialPotential,
};
use crate::quadrature::GaussLegendre;

/// Orthonormality tolerance asserted at construction.
pub const ORTHO_TOL: f64 = 1e-8;
/// Tolerance on the projection spectrum `[0, 1]`.
pub const SPECTRUM_TOL: f64 = 1e-8;
/// `|psi_l|` at the ends of the construction domain must fall below this.
const EDGE_DECAY: f64 = 1e-13;
const RESCALE: f64 = 1e150;

/// Recurrence data and construction quadrature for `psi_0, ..., psi_L`.
#[derive(Debug, Clone)]
pub struct WeightedPolySystem {
    n: usize,
    potential: PolynomialPotential,
    measure: EquilibriumMeasure,
    /// `a[0] = 0`, `a[l]` for `l = 1..=L`.
    a: Vec<f64>,
    b: Vec<f64>,
    log_mass: f64,
    domain: (f64, f64),
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `sqrt(w_i) psi_l(x_i)`, rows `l`, columns nodes.
    table: DMatrix<f64>,
    ortho_residual: f64,
}

/// Builds the system with `L` functions past `psi_0` for a one-cut potential.
pub fn build_system(v: &PolynomialPotential, n: usize, top: usize) -> Result<WeightedPolySystem> {
    let support = solve_one_cut_support(v)?;
    let measure = equilibrium_density(v, &support)?;
    build_system_on(&measure, n, top)
}

/// Default number of functions: enough for the index window `n ± (2m - 1)`
/// used by the matrix kernels, plus slack.
pub fn default_top(v: &PolynomialPotential, n: usize) -> usize {
    n + 4 * v.half_degree()
}

/// As [`build_system`], reusing an equilibrium measure (required for
/// multi-cut potentials, whose endpoints are not solved here).
pub fn build_system_on(
    measure: &EquilibriumMeasure,
    n: usize,
    top: usize,
) -> Result<WeightedPolySystem> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if top < n {
        return Err(Error::Config(format!("need L >= n, got L = {top}, n = {n}")));
    }
    let support = measure.support();
    let center = 0.5 * (support.lower() + support.upper());
    let mut half = 0.6 * support.diameter();
    // linear term: the top functions oscillate about n times across the support
    let node_count = n + top + (40.0 * ((n + top) as f64).sqrt()).ceil() as usize + 200;
    let gl = GaussLegendre::new(node_count);
    for _ in 0..40 {
        let domain = (center - half, center + half);
        let sys = stieltjes(measure, n, top, domain, &gl)?;
        let edge = [domain.0, domain.1]
            .iter()
            .flat_map(|&x| sys.psi_all(x, top))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if edge < EDGE_DECAY {
            if sys.ortho_residual > ORTHO_TOL {
                return Err(Error::Orthogonality {
                    residual: sys.ortho_residual,
                    tolerance: ORTHO_TOL,
                });
            }
            return Ok(sys);
        }
        half *= 1.2;
    }
    Err(Error::Config(
        "could not find a domain where the weighted polynomials decay".into(),
    ))
}

/// Discretized Stieltjes procedure on the Gauss–Legendre measure of `domain`.
fn stieltjes(
    measure: &EquilibriumMeasure,
    n: usize,
    top: usize,
    domain: (f64, f64),
    gl: &GaussLegendre,
) -> Result<WeightedPolySystem> {
    let v = measure.potential();
    let nf = n as f64;
    let (x, w) = gl.mapped(domain.0, domain.1);
    let nodes = x.len();
    // log sqrt(w_i e^{-nV(x_i)})
    let half_log: Vec<f64> = x
        .iter()
        .zip(&w)
        .map(|(&x, &w)| -0.5 * nf * v.value(x) + 0.5 * w.ln())
        .collect();
    let peak = half_log.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_mass =
        2.0 * peak + half_log.iter().map(|&h| (2.0 * (h - peak)).exp()).sum::<f64>().ln();

    let mut scale: Vec<f64> = half_log.iter().map(|&h| h - 0.5 * log_mass).collect();
    let mut m_prev = vec![0.0; nodes];
    let mut m_cur = vec![1.0; nodes];
    let mut a = vec![0.0; top + 1];
    let mut b = vec![0.0; top + 1];
    let mut table = DMatrix::zeros(top + 1, nodes);
    let mut vals = vec![0.0; nodes];
    let mut resid = vec![0.0; nodes];
    for l in 0..=top {
        for i in 0..nodes {
            vals[i] = scaled(m_cur[i], scale[i]);
            table[(l, i)] = vals[i];
        }
        b[l] = (0..nodes).map(|i| x[i] * vals[i] * vals[i]).sum();
        if l == top {
            break;
        }
        let mut norm2 = 0.0;
        for i in 0..nodes {
            resid[i] = (x[i] - b[l]) * m_cur[i] - a[l] * m_prev[i];
            let r = scaled(resid[i], scale[i]);
            norm2 += r * r;
        }
        let next = norm2.sqrt();
        if !(next > 0.0 && next.is_finite()) {
            return Err(Error::RecurrenceBreakdown {
                index: l + 1,
                value: next,
            });
        }
        a[l + 1] = next;
        for i in 0..nodes {
            m_prev[i] = m_cur[i];
            m_cur[i] = resid[i] / next;
            if m_cur[i].abs() > RESCALE {
                m_cur[i] /= RESCALE;
                m_prev[i] /= RESCALE;
                scale[i] += RESCALE.ln();
            }
        }
    }
    let gram = &table * table.transpose();
    let mut ortho_residual: f64 = 0.0;
    for j in 0..=top {
        for k in 0..=top {
            let target = if j == k { 1.0 } else { 0.0 };
            ortho_residual = ortho_residual.max((gram[(j, k)] - target).abs());
        }
    }
    Ok(WeightedPolySystem {
        n,
        potential: v.clone(),
        measure: measure.clone(),
        a,
        b,
        log_mass,
        domain,
        nodes: x,
        weights: w,
        table,
        ortho_residual,
    })
}

#[inline]
fn scaled(mantissa: f64, log_scale: f64) -> f64 {
    if mantissa == 0.0 {
        return 0.0;
    }
    if log_scale > -700.0 {
        mantissa * log_scale.exp()
    } else {
        mantissa.signum() * (mantissa.abs().ln() + log_scale).exp()
    }
}

impl WeightedPolySystem {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Highest available index `L`.
    pub fn top(&self) -> usize {
        self.a.len() - 1
    }

    pub fn potential(&self) -> &PolynomialPotential {
        &self.potential
    }

    pub fn measure(&self) -> &EquilibriumMeasure {
        &self.measure
    }

    /// `a_l`; `a_0 = 0` by convention.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `log ∫ e^{-nV}`.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// Interval carrying the construction quadrature; every `psi_l` is
    /// negligible outside it.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn quadrature(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    /// `max |(psi_j, psi_k) - delta_jk|` on the construction quadrature.
    pub fn orthonormality_residual(&self) -> f64 {
        self.ortho_residual
    }

    /// Length scale used for the near-diagonal switch of the kernel.
    pub fn scale(&self) -> f64 {
        0.5 * (self.domain.1 - self.domain.0)
    }

    /// `psi_0(x), ..., psi_upto(x)`.
    pub fn psi_all(&self, x: f64, upto: usize) -> Vec<f64> {
        let mut out = vec![0.0; upto + 1];
        self.recur(x, upto, &mut out, None);
        out
    }

    /// Values and derivatives `psi_l'(x)` for `l <= upto`.
    pub fn psi_with_derivative(&self, x: f64, upto: usize) -> (Vec<f64>, Vec<f64>) {
        let mut psi = vec![0.0; upto + 1];
        let mut dpsi = vec![0.0; upto + 1];
        self.recur(x, upto, &mut psi, Some(&mut dpsi));
        (psi, dpsi)
    }

    pub fn psi(&self, l: usize, x: f64) -> f64 {
        self.psi_all(x, l)[l]
    }

    fn recur(&self, x: f64, upto: usize, psi: &mut [f64], mut dpsi: Option<&mut [f64]>) {
        assert!(upto <= self.top(), "index {upto} beyond L = {}", self.top());
        let nf = self.n as f64;
        let vd = 0.5 * nf * self.potential.derivative(x);
        let mut s = -0.5 * nf * self.potential.value(x) - 0.5 * self.log_mass;
        let (mut m_prev, mut m) = (0.0, 1.0);
        let (mut d_prev, mut d) = (0.0, 0.0);
        for l in 0..=upto {
            psi[l] = scaled(m, s);
            if let Some(dp) = dpsi.as_deref_mut() {
                dp[l] = scaled(d - vd * m, s);
            }
            if l == upto {
                break;
            }
            let a_next = self.a[l + 1];
            let shift = x - self.b[l];
            let m_next = (shift * m - self.a[l] * m_prev) / a_next;
            let d_next = (shift * d + m - self.a[l] * d_prev) / a_next;
            m_prev = m;
            m = m_next;
            d_prev = d;
            d = d_next;
            if m.abs().max(d.abs()) > RESCALE {
                m /= RESCALE;
                m_prev /= RESCALE;
                d /= RESCALE;
                d_prev /= RESCALE;
                s += RESCALE.ln();
            }
        }
    }

    /// Matrix `psi_l(x_i)`, rows nodes, columns `l = 0..=upto`.
    pub fn psi_table(&self, xs: &[f64], upto: usize) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = xs.par_iter().map(|&x| self.psi_all(x, upto)).collect();
        DMatrix::from_fn(xs.len(), upto + 1, |i, l| rows[i][l])
    }

    /// Values and derivatives on a grid, both laid out as [`Self::psi_table`].
    pub fn psi_tables_with_derivative(
        &self,
        xs: &[f64],
        upto: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = xs
            .par_iter()
            .map(|&x| self.psi_with_derivative(x, upto))
            .collect();
        (
            DMatrix::from_fn(xs.len(), upto + 1, |i, l| rows[i].0[l]),
            DMatrix::from_fn(xs.len(), upto + 1, |i, l| rows[i].1[l]),
        )
    }

    /// Christoffel–Darboux kernel `K_n(x, y)`.
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let n = self.n;
        if x == y {
            let (p, d) = self.psi_with_derivative(x, n);
            return self.a[n] * (d[n] * p[n - 1] - d[n - 1] * p[n]);
        }
        if (x - y).abs() < 1e-6 * self.scale() {
            // the difference quotient cancels here; sum directly
            let px = self.psi_all(x, n - 1);
            let py = self.psi_all(y, n - 1);
            return px.iter().zip(&py).map(|(a, b)| a * b).sum();
        }
        let px = self.psi_all(x, n);
        let py = self.psi_all(y, n);
        self.a[n] * (px[n] * py[n - 1] - px[n - 1] * py[n]) / (x - y)
    }

    /// `K_n(x, y)` as the plain sum `sum_{l<n} psi_l(x) psi_l(y)`.
    pub fn kernel_by_sum(&self, x: f64, y: f64) -> f64 {
        let px = self.psi_all(x, self.n - 1);
        let py = self.psi_all(y, self.n - 1);
        px.iter().zip(&py).map(|(a, b)| a * b).sum()
    }

    /// `∫ K_n(x, x) dx` on the construction quadrature, via the derivative
    /// form of the kernel diagonal.
    pub fn kernel_trace(&self) -> f64 {
        self.nodes
            .par_iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * self.kernel(x, x))
            .sum()
    }

    /// Largest `|∫ K(x, t) K(t, y) dt - K(x, y)|` over the given pairs.
    pub fn reproducing_residual(&self, pairs: &[(f64, f64)]) -> f64 {
        let n = self.n;
        // sqrt(w_i) psi_l(x_i) for l < n
        let b = self.table.rows(0, n);
        pairs
            .iter()
            .map(|&(x, y)| {
                let px = DVector::from_vec(self.psi_all(x, n - 1));
                let py = DVector::from_vec(self.psi_all(y, n - 1));
                let kx = b.transpose() * px;
                let ky = b.transpose() * py;
                (kx.dot(&ky) - self.kernel(x, y)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Restriction of `K_n` to the whole construction domain.
    pub fn full_support_kernel(&self) -> DiscretizedKernel {
        let factor = self.table.rows(0, self.n).transpose();
        DiscretizedKernel {
            interval: self.domain,
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            factor,
        }
    }

    /// Recurrence coefficients as CSV rows `l, a_l, b_l`.
    pub fn coefficient_rows(&self) -> Vec<(usize, f64, f64)> {
        (0..=self.top()).map(|l| (l, self.a[l], self.b[l])).collect()
    }
}

/// `K_n` restricted to `[a, b]` in symmetrized Nyström form
/// `A_ij = sqrt(w_i) K(t_i, t_j) sqrt(w_j)`, stored through its factor
/// `B_il = sqrt(w_i) psi_l(t_i)` with `A = B B^T`.
#[derive(Debug, Clone)]
pub struct DiscretizedKernel {
    interval: (f64, f64),
    nodes: Vec<f64>,
    weights: Vec<f64>,
    factor: DMatrix<f64>,
}

impl DiscretizedKernel {
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `N_q x n` factor `B`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// The symmetric `N_q x N_q` matrix `A`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// `B^T B`, which shares the nonzero spectrum of `A`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.factor.transpose() * &self.factor
    }

    pub fn trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    /// Eigenvalues of `A` (nonzero part), ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let small = if self.factor.nrows() < self.factor.ncols() {
            self.matrix()
        } else {
            self.gram()
        };
        let mut ev: Vec<f64> = SymmetricEigen::new(small).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }
}

/// Minimum Nyström size on `[a, b]`: eight nodes per kernel oscillation.
pub fn required_nodes(system: &WeightedPolySystem, a: f64, b: f64) -> usize {
    (8.0 * system.n as f64 * (b - a) * system.measure.max_density()).ceil() as usize
}

/// Checks that `[a, b]` sits in the bulk: inside one cut, 5% of the support
/// diameter away from its ends.
pub fn check_bulk_interval(measure: &EquilibriumMeasure, a: f64, b: f64) -> Result<()> {
    let s = measure.support();
    if !s.contains_with_margin(a, b, 0.05 * s.diameter()) {
        return Err(Error::IntervalOutsideBulk { interval: (a, b) });
    }
    Ok(())
}

/// `K_n[Δ]` on `nq` Gauss–Legendre nodes.
pub fn project_kernel(
    system: &WeightedPolySystem,
    a: f64,
    b: f64,
    nq: usize,
) -> Result<DiscretizedKernel> {
    check_bulk_interval(&system.measure, a, b)?;
    let required = required_nodes(system, a, b);
    if nq < required {
        return Err(Error::TooFewNodes {
            required,
            given: nq,
        });
    }
    let (t, w) = GaussLegendre::new(nq).mapped(a, b);
    let mut factor = system.psi_table(&t, system.n - 1);
    for (i, &wi) in w.iter().enumerate() {
        factor.row_mut(i).scale_mut(wi.sqrt());
    }
    let kernel = DiscretizedKernel {
        interval: (a, b),
        nodes: t,
        weights: w,
        factor,
    };
    let ev = kernel.eigenvalues();
    for &e in &ev {
        if !(-SPECTRUM_TOL..=1.0 + SPECTRUM_TOL).contains(&e) {
            return Err(Error::Spectrum { value: e });
        }
    }
    Ok(kernel)
}

/// `sup |K_n(x0 + u/(n rho), x0 + v/(n rho)) / (n rho) - sinc(u - v)|`
/// over `|u|, |v| <= window`.
pub fn bulk_sine_compare(system: &WeightedPolySystem, x0: f64, window: f64) -> Result<f64> {
    let s = system.measure.support();
    if !s.contains(x0) || s.distance_to_edge(x0) < 0.1 * s.diameter() {
        return Err(Error::IntervalOutsideBulk {
            interval: (x0, x0),
        });
    }
    let scale = system.n as f64 * system.measure.density(x0);
    let steps = 24;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| -window + 2.0 * window * k as f64 / steps as f64)
        .collect();
    let dev = grid
        .par_iter()
        .map(|&u| {
            grid.iter()
                .map(|&v| {
                    let k = system.kernel(x0 + u / scale, x0 + v / scale) / scale;
                    (k - sinc(u - v)).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(dev)
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
    }
}

/// Precomputed `∫_Δ psi_l`, for evaluating `v_n(x) = ∫_Δ K_n(x, y) dy`.
#[derive(Debug, Clone)]
pub struct DecayProbe {
    interval: (f64, f64),
    integrals: Vec<f64>,
    gram: DMatrix<f64>,
}

impl DecayProbe {
    pub fn new(system: &WeightedPolySystem, a: f64, b: f64) -> Self {
        let nq = required_nodes(system, a, b).max(64);
        let (t, w) = GaussLegendre::new(nq).mapped(a, b);
        let table = system.psi_table(&t, system.n - 1);
        let integrals = (0..system.n)
            .map(|l| t.iter().enumerate().map(|(i, _)| w[i] * table[(i, l)]).sum())
            .collect();
        let mut factor = table;
        for (i, &wi) in w.iter().enumerate() {
            factor.row_mut(i).scale_mut(wi.sqrt());
        }
        let gram = factor.transpose() * factor;
        Self {
            interval: (a, b),
            integrals,
            gram,
        }
    }

    pub fn eval(&self, system: &WeightedPolySystem, x: f64) -> Result<f64> {
        let (a, b) = self.interval;
        if a <= x && x <= b {
            return Err(Error::PointInInterval(x));
        }
        let p = system.psi_all(x, system.n - 1);
        Ok(p.iter().zip(&self.integrals).map(|(p, c)| p * c).sum())
    }

    /// `||v_n||` in `L^2` of the complement of `Δ`, from
    /// `∫_{Δ^c} psi_j psi_k = delta_jk - (psi_j, psi_k)_Δ`.
    pub fn complement_norm(&self) -> f64 {
        let c = DVector::from_vec(self.integrals.clone());
        let inner = c.dot(&c) - (&self.gram * &c).dot(&c);
        inner.max(0.0).sqrt()
    }
}

/// `v_n(x)` for a point outside `[a, b]`.
pub fn vn_decay(system: &WeightedPolySystem, a: f64, b: f64, x: f64) -> Result<f64> {
    DecayProbe::new(system, a, b).eval(system, x)
}

/// Envelope fit of `v_n` on the complement of `Δ`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub n: usize,
    /// `max |v_n(x)| (1 + n dist(x, ∂Δ))` over the scan.
    pub envelope_constant: f64,
    /// `sqrt(n) ||v_n||_{L^2(Δ^c)}`.
    pub scaled_l2_norm: f64,
    /// `|v_n|` at the scan point farthest from `Δ`.
    pub far_value: f64,
}

pub fn decay_envelope(system: &WeightedPolySystem, a: f64, b: f64) -> Result<DecayReport> {
    let probe = DecayProbe::new(system, a, b);
    let support = system.measure.support();
    let (lo, hi) = (support.lower(), support.upper());
    let nf = system.n as f64;
    let scan: Vec<f64> = (0..=800)
        .map(|k| lo + (hi - lo) * k as f64 / 800.0)
        .filter(|&x| x < a || x > b)
        .collect();
    let values: Vec<(f64, f64)> = scan
        .par_iter()
        .map(|&x| {
            let v = probe.eval(system, x).unwrap_or(0.0);
            let dist = (x - a).abs().min((x - b).abs());
            (v, dist)
        })
        .collect();
    let envelope_constant = values
        .iter()
        .map(|&(v, d)| v.abs() * (1.0 + nf * d))
        .fold(0.0, f64::max);
    let far_value = values
        .iter()
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .map(|p| p.0.abs())
        .unwrap_or(0.0);
    Ok(DecayReport {
        n: system.n,
        envelope_constant,
        scaled_l2_norm: nf.sqrt() * probe.complement_norm(),
        far_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(n: usize) -> WeightedPolySystem {
        let v = PolynomialPotential::gaussian();
        build_system(&v, n, default_top(&v, n)).unwrap()
    }

    #[test]
    fn hermite_recurrence() {
        let sys = gaussian(100);
        for l in 1..=sys.top() {
            assert!((sys.a()[l] - (l as f64 / 100.0).sqrt()).abs() < 1e-10, "l={l}");
        }
        assert!(sys.b().iter().all(|b| b.abs() < 1e-12));
        assert!(sys.orthonormality_residual() < 1e-10);
    }

    #[test]
    fn ground_state() {
        let n = 30;
        let sys = gaussian(n);
        let nf = n as f64;
        for &x in &[-1.0, 0.0, 0.4, 2.5] {
            let exact = (nf / (2.0 * PI)).powf(0.25) * (-nf * x * x / 4.0).exp();
            assert!((sys.psi(0, x) - exact).abs() < 1e-12 * exact.max(1.0));
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let sys = gaussian(20);
        let h = 1e-6;
        for &x in &[-0.7, 0.1, 1.3] {
            let (_, d) = sys.psi_with_derivative(x, 22);
            let up = sys.psi_all(x + h, 22);
            let dn = sys.psi_all(x - h, 22);
            for l in 0..=22 {
                let fd = (up[l] - dn[l]) / (2.0 * h);
                assert!((fd - d[l]).abs() < 1e-5, "l={l} x={x}");
            }
        }
    }

    #[test]
    fn kernel_branches_agree() {
        let sys = gaussian(40);
        for &(x, y) in &[(0.3, -0.2), (1.0, 1.0 + 1e-9), (0.5, 0.5)] {
            assert!((sys.kernel(x, y) - sys.kernel_by_sum(x, y)).abs() < 1e-9);
        }
        assert!((sys.kernel(0.2, 0.9) - sys.kernel(0.9, 0.2)).abs() < 1e-13);
    }

    #[test]
    fn trace_and_reproduction() {
        let sys = gaussian(50);
        assert!((sys.kernel_trace() - 50.0).abs() < 1e-8);
        assert!((sys.full_support_kernel().trace() - 50.0).abs() < 1e-8);
        assert!(sys.reproducing_residual(&[(0.1, 0.3), (-1.5, 1.2)]) < 1e-8);
    }

    #[test]
    fn projection_spectrum_and_mean() {
        let sys = gaussian(100);
        let nq = required_nodes(&sys, -0.5, 0.5);
        let k = project_kernel(&sys, -0.5, 0.5, nq).unwrap();
        let ev = k.eigenvalues();
        assert!(ev[0] > -1e-8 && ev[ev.len() - 1] < 1.0 + 1e-8);
        let mass = sys.measure().mass_in(-0.5, 0.5);
        assert!((k.trace() - 100.0 * mass).abs() < 0.5);
        assert!(matches!(
            project_kernel(&sys, -0.5, 0.5, nq / 2),
            Err(Error::TooFewNodes { .. })
        ));
        assert!(matches!(
            project_kernel(&sys, 1.0, 1.95, 4000),
            Err(Error::IntervalOutsideBulk { .. })
        ));
    }

    #[test]
    fn quartic_parity() {
        let v = PolynomialPotential::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).unwrap();
        let sys = build_system(&v, 24, default_top(&v, 24)).unwrap();
        assert!(sys.b().iter().all(|b| b.abs() < 1e-10));
        let p = sys.psi_all(0.37, sys.top());
        let q = sys.psi_all(-0.37, sys.top());
        for l in 0..=sys.top() {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            assert!((p[l] - sign * q[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_kernel_limit() {
        let sys = gaussian(200);
        assert!(bulk_sine_compare(&sys, 0.0, 3.0).unwrap() < 0.05);
        assert!(bulk_sine_compare(&sys, 1.95, 3.0).is_err());
    }

    #[test]
    fn decay_outside_interval() {
        let sys = gaussian(100);
        assert!(matches!(
            vn_decay(&sys, -1.0, 1.0, 0.0),
            Err(Error::PointInInterval(_))
        ));
        let near = vn_decay(&sys, -1.0, 1.0, 1.02).unwrap().abs();
        let far = vn_decay(&sys, -1.0, 1.0, 1.8).unwrap().abs();
        assert!(far < near);
        let r = decay_envelope(&sys, -1.0, 1.0).unwrap();
        assert!(r.envelope_constant < 5.0, "{r:?}");
    }
}
