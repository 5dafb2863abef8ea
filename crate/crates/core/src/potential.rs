//! Polynomial potentials and their equilibrium measures.
//!
//! The equilibrium density is represented as
//! `rho(x) = P(x) Im X^{1/2}(x + i0) / (2 pi)` with `X(z) = prod (z - E_k)`
//! over the support endpoints and `P` recovered from a contour integral
//! around the support. For one-cut potentials the endpoints are solved
//! from the two moment conditions; multi-cut endpoints are supplied by the
//! caller and only verified.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{sine_mapped, GaussLegendre};

type C64 = Complex<f64>;

/// Nodes per support interval for every integral against the density.
pub const SUPPORT_NODES: usize = 400;
/// Trapezoid nodes on the contour used for `P`.
pub const CONTOUR_NODES: usize = 512;
/// Tolerance on the normalization of the density.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Even-degree polynomial `V(x) = sum c_k x^k` with positive leading coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpec", into = "PotentialSpec")]
pub struct PolynomialPotential {
    coeffs: Vec<f64>,
}

/// Wire form of a potential: `{"coeffs": [c0, c1, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub coeffs: Vec<f64>,
}

impl TryFrom<PotentialSpec> for PolynomialPotential {
    type Error = Error;

    fn try_from(spec: PotentialSpec) -> Result<Self> {
        Self::new(spec.coeffs)
    }
}

impl From<PolynomialPotential> for PotentialSpec {
    fn from(v: PolynomialPotential) -> Self {
        PotentialSpec { coeffs: v.coeffs }
    }
}

impl PolynomialPotential {
    /// Validates `c_0, ..., c_{2m}`: even degree at least 2, `c_{2m} > 0`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidPotential("empty coefficient list".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential("non-finite coefficient".into()));
        }
        let degree = coeffs.len() - 1;
        if degree == 0 {
            return Err(Error::InvalidPotential("degree 0".into()));
        }
        if degree % 2 == 1 {
            return Err(Error::InvalidPotential(format!("odd degree {degree}")));
        }
        let lead = coeffs[degree];
        if lead <= 0.0 {
            return Err(Error::InvalidPotential(format!(
                "leading coefficient {lead} is not positive"
            )));
        }
        Ok(Self { coeffs })
    }

    /// `x^2 / 2`.
    pub fn gaussian() -> Self {
        Self {
            coeffs: vec![0.0, 0.0, 0.5],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `m` in `deg V = 2m`.
    pub fn half_degree(&self) -> usize {
        self.degree() / 2
    }

    pub fn is_even(&self) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + (k * (k - 1)) as f64 * c)
    }

    fn derivative_complex(&self, z: C64) -> C64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, (k, &c)| acc * z + k as f64 * c)
    }

    /// Shifted potential `x -> V(x - shift)`.
    pub fn translated(&self, shift: f64) -> Self {
        // binomial expansion of sum c_k (x - s)^k
        let d = self.degree();
        let mut out = vec![0.0; d + 1];
        for (k, &c) in self.coeffs.iter().enumerate() {
            let mut binom = 1.0;
            for j in 0..=k {
                // coefficient of x^j in (x - s)^k
                out[j] += c * binom * (-shift).powi((k - j) as i32);
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
        Self { coeffs: out }
    }
}

/// Union of disjoint intervals `[E_1, E_2] ∪ ... ∪ [E_{2q-1}, E_{2q}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    endpoints: Vec<f64>,
}

impl SupportSet {
    pub fn new(endpoints: Vec<f64>) -> Result<Self> {
        if endpoints.is_empty() || endpoints.len() % 2 == 1 {
            return Err(Error::InvalidSupport(format!(
                "need an even, nonzero number of endpoints, got {}",
                endpoints.len()
            )));
        }
        if endpoints.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidSupport("non-finite endpoint".into()));
        }
        if !endpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidSupport(
                "endpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { endpoints })
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.endpoints.chunks(2).map(|c| (c[0], c[1]))
    }

    pub fn cuts(&self) -> usize {
        self.endpoints.len() / 2
    }

    pub fn lower(&self) -> f64 {
        self.endpoints[0]
    }

    pub fn upper(&self) -> f64 {
        *self.endpoints.last().unwrap()
    }

    /// Distance between the outermost endpoints.
    pub fn diameter(&self) -> f64 {
        self.upper() - self.lower()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals().any(|(a, b)| a <= x && x <= b)
    }

    /// Distance from `x` to the nearest endpoint.
    pub fn distance_to_edge(&self, x: f64) -> f64 {
        self.endpoints
            .iter()
            .map(|e| (x - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// True when `[a, b]` lies in a single cut, at least `margin` from its ends.
    pub fn contains_with_margin(&self, a: f64, b: f64, margin: f64) -> bool {
        a < b
            && self
                .intervals()
                .any(|(lo, hi)| a >= lo + margin && b <= hi - margin)
    }
}

fn chebyshev_mean<F: Fn(f64) -> f64>(n: usize, f: F) -> f64 {
    (0..n)
        .map(|i| f(((i as f64 + 0.5) * PI / n as f64).cos()))
        .sum::<f64>()
        / n as f64
}

/// Solves the one-cut endpoint equations
/// `∫ V'(t) / sqrt((b-t)(t-a)) dt = 0` and
/// `(1/2pi) ∫ t V'(t) / sqrt((b-t)(t-a)) dt = 1` by damped Newton.
pub fn solve_one_cut_support(v: &PolynomialPotential) -> Result<SupportSet> {
    let m = v.half_degree();
    let nodes = (2 * m + 8).max(64);
    let lead = v.coeffs()[2 * m];
    let sub = v.coeffs()[2 * m - 1];
    // mean of cos^{2m} over the half period: (2m-1)!! / (2m)!!
    let mut ratio = 1.0;
    for j in 1..=m {
        ratio *= (2 * j - 1) as f64 / (2 * j) as f64;
    }
    let mut c = -sub / (2.0 * m as f64 * lead);
    let mut r = (1.0 / (m as f64 * lead * ratio)).powf(1.0 / (2 * m) as f64);

    let residual = |c: f64, r: f64| -> [f64; 2] {
        let g1 = chebyshev_mean(nodes, |t| v.derivative(c + r * t));
        let g2 = 0.5 * r * chebyshev_mean(nodes, |t| t * v.derivative(c + r * t)) - 1.0;
        [g1, g2]
    };
    let norm = |g: [f64; 2]| g[0].abs().max(g[1].abs());

    let max_iter = 100;
    let mut g = residual(c, r);
    for _ in 0..max_iter {
        if norm(g) < 1e-13 {
            break;
        }
        let j11 = chebyshev_mean(nodes, |t| v.second_derivative(c + r * t));
        let j12 = chebyshev_mean(nodes, |t| t * v.second_derivative(c + r * t));
        let j21 = 0.5 * r * j12;
        let j22 = 0.5 * chebyshev_mean(nodes, |t| t * v.derivative(c + r * t))
            + 0.5 * r * chebyshev_mean(nodes, |t| t * t * v.second_derivative(c + r * t));
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dc = (g[0] * j22 - g[1] * j12) / det;
        let dr = (j11 * g[1] - j21 * g[0]) / det;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (cn, rn) = (c - step * dc, r - step * dr);
            if rn > 0.0 {
                let gn = residual(cn, rn);
                if norm(gn) < norm(g) || norm(gn) < 1e-13 {
                    c = cn;
                    r = rn;
                    g = gn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(g) >= 1e-12 {
        return Err(Error::NoConvergence {
            residual: norm(g),
            iterations: max_iter,
        });
    }
    let support = SupportSet::new(vec![c - r, c + r])?;
    // positivity of the one-cut density
    let measure = EquilibriumMeasure::unchecked(v.clone(), support.clone());
    for k in 0..=200 {
        let x = c - r + 2.0 * r * k as f64 / 200.0;
        let p = measure.p_factor(x);
        if p < 0.0 {
            return Err(Error::NegativeDensity {
                at: x,
                value: p,
            });
        }
    }
    Ok(support)
}

/// Equilibrium measure of `V` on a given support.
#[derive(Debug, Clone)]
pub struct EquilibriumMeasure {
    potential: PolynomialPotential,
    support: SupportSet,
    /// `(zeta_k, weight_k, V'(zeta_k))` with `weight_k` absorbing
    /// `dzeta / (2 pi i X^{1/2}(zeta))`.
    contour: Vec<(C64, C64, C64)>,
}

fn x_sqrt_complex(endpoints: &[f64], z: C64) -> C64 {
    endpoints
        .chunks(2)
        .map(|e| (z - e[0]).sqrt() * (z - e[1]).sqrt())
        .product()
}

/// `Im X^{1/2}(x + i0)` with the branch `X^{1/2}(z) ~ z^q`.
fn x_sqrt_upper_imag(endpoints: &[f64], x: f64) -> f64 {
    let mut acc = C64::new(1.0, 0.0);
    for &e in endpoints {
        let f = if x >= e {
            C64::new((x - e).sqrt(), 0.0)
        } else {
            C64::new(0.0, (e - x).sqrt())
        };
        acc *= f;
    }
    acc.im
}

impl EquilibriumMeasure {
    fn unchecked(potential: PolynomialPotential, support: SupportSet) -> Self {
        // Ellipse of Joukowski type around the hull: zeta = c + h (R w + 1/(R w)) / 2,
        // |w| = 1. Its semi-minor axis h (R - 1/R) / 2 equals the half diameter
        // for R = 1 + sqrt 2.
        let c = 0.5 * (support.lower() + support.upper());
        let h = 0.5 * support.diameter();
        let big_r = 1.0 + 2f64.sqrt();
        let n = CONTOUR_NODES;
        let contour = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                let w = C64::from_polar(1.0, th);
                let zeta = c + h * 0.5 * (big_r * w + 1.0 / (big_r * w));
                let dzeta = h * 0.5 * C64::i() * (big_r * w - 1.0 / (big_r * w));
                let xs = x_sqrt_complex(support.endpoints(), zeta);
                let weight = dzeta / (C64::i() * xs) / n as f64;
                (zeta, weight, potential.derivative_complex(zeta))
            })
            .collect();
        Self {
            potential,
            support,
            contour,
        }
    }

    pub fn potential(&self) -> &PolynomialPotential {
        &self.potential
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    /// The analytic factor `P` evaluated at a real point.
    pub fn p_factor(&self, x: f64) -> f64 {
        let vx = self.potential.derivative(x);
        let z = C64::new(x, 0.0);
        self.contour
            .iter()
            .map(|&(zeta, w, vz)| w * (vx - vz) / (z - zeta))
            .sum::<C64>()
            .re
    }

    pub fn density(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        self.p_factor(x) * x_sqrt_upper_imag(self.support.endpoints(), x) / (2.0 * PI)
    }

    /// Quadrature nodes and weights covering the support.
    pub fn support_rule(&self, per_interval: usize) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for (a, b) in self.support.intervals() {
            let (x, w) = sine_mapped(a, b, per_interval);
            xs.extend(x);
            ws.extend(w);
        }
        (xs, ws)
    }

    pub fn mass(&self) -> f64 {
        let (x, w) = self.support_rule(SUPPORT_NODES);
        x.iter().zip(&w).map(|(&x, &w)| w * self.density(x)).sum()
    }

    /// `∫_Δ rho` for an interval `[a, b]`.
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        self.integrated_density(b) - self.integrated_density(a)
    }

    /// `∫_{-∞}^x rho`.
    pub fn integrated_density(&self, x: f64) -> f64 {
        let gl = GaussLegendre::new(SUPPORT_NODES);
        let mut total = 0.0;
        for (lo, hi) in self.support.intervals() {
            if x <= lo {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let r = 0.5 * (hi - lo);
            let th_hi = if x >= hi {
                0.5 * PI
            } else {
                ((x - mid) / r).clamp(-1.0, 1.0).asin()
            };
            total += gl.integrate(-0.5 * PI, th_hi, |th| {
                let t = mid + r * th.sin();
                self.density(t) * r * th.cos()
            });
        }
        total
    }

    /// Maximum of the density over a scan of the support.
    pub fn max_density(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (a, b) in self.support.intervals() {
            for k in 0..=400 {
                best = best.max(self.density(a + (b - a) * k as f64 / 400.0));
            }
        }
        best
    }

    fn scan_support(&self, per_interval: usize) -> Vec<f64> {
        self.support
            .intervals()
            .flat_map(|(a, b)| {
                (0..=per_interval).map(move |k| a + (b - a) * k as f64 / per_interval as f64)
            })
            .collect()
    }
}

/// Builds the equilibrium measure on `support` and verifies normalization,
/// positivity and the genericity condition `inf |P| > 0`.
pub fn equilibrium_density(
    v: &PolynomialPotential,
    support: &SupportSet,
) -> Result<EquilibriumMeasure> {
    let measure = EquilibriumMeasure::unchecked(v.clone(), support.clone());
    let scan = measure.scan_support(200);
    let max_p = scan
        .iter()
        .map(|&x| measure.p_factor(x).abs())
        .fold(0.0, f64::max);
    for &x in &scan {
        let p = measure.p_factor(x);
        if p.abs() <= 1e-8 * max_p.max(1e-300) {
            return Err(Error::NonGeneric { min_abs_p: p.abs() });
        }
        let rho = measure.density(x);
        if rho < -1e-12 {
            return Err(Error::NegativeDensity { at: x, value: rho });
        }
    }
    let mass = measure.mass();
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Normalization {
            mass,
            tolerance: NORMALIZATION_TOL,
        });
    }
    Ok(measure)
}

/// `v(x) = 2 ∫ log|mu - x| rho(mu) dmu - V(x)` with its level on the support.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    measure: EquilibriumMeasure,
    level: f64,
    s_nodes: Vec<f64>,
    s_weights: Vec<f64>,
    /// Largest `|v - v*|` on the support scan.
    pub support_deviation: f64,
    /// Largest `v - v*` off the support, endpoint neighbourhoods excluded.
    pub off_support_excess: f64,
}

/// Exclusion radius around endpoints for the off-support scan.
pub const EDGE_EXCLUSION: f64 = 1e-3;

impl EffectivePotential {
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn measure(&self) -> &EquilibriumMeasure {
        &self.measure
    }

    pub fn eval(&self, x: f64) -> f64 {
        2.0 * self.log_potential(x) - self.measure.potential.value(x)
    }

    /// `∫ log|mu - x| rho(mu) dmu`, graded towards the log singularity.
    fn log_potential(&self, x: f64) -> f64 {
        let mut total = 0.0;
        for (lo, hi) in self.measure.support.intervals() {
            let mid = 0.5 * (lo + hi);
            let r = 0.5 * (hi - lo);
            let split = ((x - mid) / r).clamp(-1.0, 1.0).asin();
            let integrand = |th: f64| {
                let t = mid + r * th.sin();
                let d = (t - x).abs();
                if d == 0.0 {
                    0.0
                } else {
                    self.measure.density(t) * r * th.cos() * d.ln()
                }
            };
            for (from, to) in [(split, -0.5 * PI), (split, 0.5 * PI)] {
                let len = to - from;
                if len.abs() < 1e-300 {
                    continue;
                }
                // theta = from + len * s^4 clusters nodes at the singular end
                total += self
                    .s_nodes
                    .iter()
                    .zip(&self.s_weights)
                    .map(|(&s, &w)| {
                        let s3 = s * s * s;
                        w * 4.0 * s3 * integrand(from + len * s3 * s)
                    })
                    .sum::<f64>()
                    * len.abs();
            }
        }
        total
    }
}

/// Evaluates `v` and reports its constancy on the support and its margin
/// below the support level elsewhere; `tolerance` bounds the excess.
pub fn effective_potential(
    measure: &EquilibriumMeasure,
    tolerance: f64,
) -> Result<EffectivePotential> {
    let (s_nodes, s_weights) = GaussLegendre::new(SUPPORT_NODES / 2).mapped(0.0, 1.0);
    let mut eff = EffectivePotential {
        measure: measure.clone(),
        level: 0.0,
        s_nodes,
        s_weights,
        support_deviation: 0.0,
        off_support_excess: f64::NEG_INFINITY,
    };
    let (a0, b0) = measure.support.intervals().next().unwrap();
    eff.level = eff.eval(0.5 * (a0 + b0));

    let on = measure.scan_support(100);
    eff.support_deviation = on
        .iter()
        .map(|&x| (eff.eval(x) - eff.level).abs())
        .fold(0.0, f64::max);

    let support = &measure.support;
    let diam = support.diameter();
    let (lo, hi) = (support.lower() - diam, support.upper() + diam);
    let mut worst = (f64::NEG_INFINITY, lo);
    for k in 0..=600 {
        let x = lo + (hi - lo) * k as f64 / 600.0;
        if support.contains(x) || support.distance_to_edge(x) < EDGE_EXCLUSION {
            continue;
        }
        let excess = eff.eval(x) - eff.level;
        if excess > worst.0 {
            worst = (excess, x);
        }
    }
    eff.off_support_excess = worst.0;
    if worst.0 > tolerance {
        return Err(Error::EffectivePotential {
            at: worst.1,
            excess: worst.0,
        });
    }
    Ok(eff)
}

/// Diagnostics for the genericity condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericityReport {
    pub min_abs_p: f64,
    /// Fitted exponent of `rho ~ dist^alpha` at each endpoint.
    pub edge_exponents: Vec<f64>,
}

pub fn check_genericity(measure: &EquilibriumMeasure) -> GenericityReport {
    let min_abs_p = measure
        .scan_support(400)
        .iter()
        .map(|&x| measure.p_factor(x).abs())
        .fold(f64::INFINITY, f64::min);
    let edge_exponents = measure
        .support
        .endpoints()
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let inward = if k % 2 == 0 { 1.0 } else { -1.0 };
            let pts: Vec<(f64, f64)> = (0..9)
                .map(|i| {
                    let d = 10f64.powf(-4.0 + 0.25 * i as f64);
                    (d.ln(), measure.density(e + inward * d).ln())
                })
                .collect();
            least_squares_slope(&pts)
        })
        .collect();
    GenericityReport {
        min_abs_p,
        edge_exponents,
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
