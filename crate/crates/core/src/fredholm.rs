//! Characteristic functionals of the count in `Δ` as Fredholm determinants.
//!
//! `log Φ(x) = -x_n E N + (2/β') log det(1 + δ_n K[Δ])` with
//! `x_n = x pi / sqrt(log n)`, `δ_n = e^{x_n} - 1` and the square root
//! (β = 1, 4) pinned by continuity from `x = 0`.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_kernels::{
    interval_profile, Beta, BlockKernel, MatrixKernel, OperatorMatrices,
};
use crate::orthopoly::{check_bulk_interval, DiscretizedKernel};
use crate::quadrature::LegendreGrid;

/// Largest step in `x` along the continuation path.
pub const PATH_STEP: f64 = 0.05;
/// Tolerance on the imaginary part of a tracked log-determinant.
pub const IMAG_TOL: f64 = 1e-8;

/// `x pi / sqrt(log n)`.
pub fn scaled_x(x: f64, n: usize) -> f64 {
    x * std::f64::consts::PI / (n as f64).ln().sqrt()
}

/// How a value of `log Φ` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Scalar β = 2 determinant.
    Determinant,
    /// `2N x 2N` block determinant.
    Block,
    /// `N x N` determinant with the rank-one corrections.
    ScalarReduced,
    /// `n x n` Gram/Pfaffian ratio in the orthonormal basis.
    Gram,
    /// Monte Carlo estimate.
    Mc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Determinant => "determinant",
            Method::Block => "block",
            Method::ScalarReduced => "scalar-reduced",
            Method::Gram => "gram",
            Method::Mc => "mc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharFunctionalResult {
    pub x: f64,
    pub x_n: f64,
    pub delta: f64,
    pub log_phi: f64,
    pub mean_count: f64,
    pub method: Method,
    pub n: usize,
    pub beta: Beta,
    /// Standard error, Monte Carlo only.
    pub std_error: Option<f64>,
    /// Imaginary part left over by branch tracking.
    pub imag_part: f64,
    /// Largest step of the tracked logarithm between path points: per
    /// eigenvalue factor for block determinants, of `log Φ̂` otherwise.
    pub max_path_increment: f64,
}

impl CharFunctionalResult {
    fn zero(x: f64, n: usize, beta: Beta, method: Method, mean_count: f64) -> Self {
        Self {
            x,
            x_n: 0.0,
            delta: 0.0,
            log_phi: 0.0,
            mean_count,
            method,
            n,
            beta,
            std_error: None,
            imag_part: 0.0,
            max_path_increment: 0.0,
        }
    }
}

fn path(x: f64) -> Vec<f64> {
    let steps = (x.abs() / PATH_STEP).ceil().max(1.0) as usize;
    (1..=steps).map(|k| x * k as f64 / steps as f64).collect()
}

fn delta_of(x: f64, n: usize) -> Result<(f64, f64)> {
    let xn = scaled_x(x, n);
    let delta = xn.exp_m1();
    if delta <= -1.0 || !delta.is_finite() {
        return Err(Error::Representation(format!(
            "delta_n = {delta} for x = {x}"
        )));
    }
    Ok((xn, delta))
}

/// `Tr A (1 - A) = tr G - ||G||_F^2` with `G = B^T B`.
pub fn variance_trace(k: &DiscretizedKernel) -> Result<f64> {
    let g = k.gram();
    let v = g.trace() - g.norm_squared();
    if v < -1e-8 {
        return Err(Error::Spectrum { value: v });
    }
    Ok(v)
}

/// Mean count for β = 2: `tr A`.
pub fn mean_count_beta2(k: &DiscretizedKernel) -> f64 {
    k.trace()
}

/// β = 2 functional from the spectrum of `K_n[Δ]`, reusable across `x`.
#[derive(Debug, Clone)]
pub struct Beta2Determinant {
    n: usize,
    mean: f64,
    eigenvalues: Vec<f64>,
}

impl Beta2Determinant {
    pub fn new(kernel: &DiscretizedKernel, n: usize) -> Self {
        Self {
            n,
            mean: kernel.trace(),
            eigenvalues: kernel.eigenvalues(),
        }
    }

    pub fn mean_count(&self) -> f64 {
        self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eval(&self, x: f64) -> Result<CharFunctionalResult> {
        if x == 0.0 {
            return Ok(CharFunctionalResult::zero(
                0.0,
                self.n,
                Beta::Two,
                Method::Determinant,
                self.mean,
            ));
        }
        let (xn, delta) = delta_of(x, self.n)?;
        let logdet: f64 = self
            .eigenvalues
            .iter()
            .map(|&l| (delta * l.clamp(0.0, 1.0)).ln_1p())
            .sum();
        Ok(CharFunctionalResult {
            x,
            x_n: xn,
            delta,
            log_phi: -xn * self.mean + logdet,
            mean_count: self.mean,
            method: Method::Determinant,
            n: self.n,
            beta: Beta::Two,
            std_error: None,
            imag_part: 0.0,
            max_path_increment: 0.0,
        })
    }
}

pub fn char_functional_beta2(
    kernel: &DiscretizedKernel,
    n: usize,
    x: f64,
) -> Result<CharFunctionalResult> {
    Beta2Determinant::new(kernel, n).eval(x)
}

/// `½ log det(1 + δ_n B)` for a block kernel via its complex eigenvalues.
#[derive(Debug, Clone)]
pub struct BlockDeterminant {
    beta: Beta,
    n: usize,
    mean: f64,
    eigenvalues: Vec<Complex<f64>>,
}

impl BlockDeterminant {
    pub fn new(block: &BlockKernel, n: usize) -> Result<Self> {
        Ok(Self {
            beta: block.beta,
            n,
            mean: block.mean_count(),
            eigenvalues: complex_spectrum(&block.matrix)?,
        })
    }

    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn mean_count(&self) -> f64 {
        self.mean
    }

    pub fn eval(&self, x: f64) -> Result<CharFunctionalResult> {
        if x == 0.0 {
            return Ok(CharFunctionalResult::zero(
                0.0,
                self.n,
                self.beta,
                Method::Block,
                self.mean,
            ));
        }
        let one = Complex::new(1.0, 0.0);
        let mut args = vec![0.0; self.eigenvalues.len()];
        let mut prev = vec![one; self.eigenvalues.len()];
        let mut max_inc: f64 = 0.0;
        let mut re = 0.0;
        for xp in path(x) {
            let (_, delta) = delta_of(xp, self.n)?;
            re = 0.0;
            for (k, &mu) in self.eigenvalues.iter().enumerate() {
                let z = one + mu * delta;
                if z.norm() < 1e-12 {
                    return Err(Error::Branch {
                        x: xp,
                        factor: z.norm(),
                    });
                }
                let step = (z / prev[k]).ln();
                max_inc = max_inc.max(step.norm());
                args[k] += step.im;
                prev[k] = z;
                re += z.norm().ln();
            }
        }
        let (xn, delta) = delta_of(x, self.n)?;
        let imag = 0.5 * args.iter().sum::<f64>();
        Ok(CharFunctionalResult {
            x,
            x_n: xn,
            delta,
            log_phi: -xn * self.mean + 0.5 * re,
            mean_count: self.mean,
            method: Method::Block,
            n: self.n,
            beta: self.beta,
            std_error: None,
            imag_part: imag,
            max_path_increment: max_inc,
        })
    }
}

/// Schur eigenvalues, relaxing the deflation threshold when the QR sweep
/// stalls on clustered (Kramers-paired) eigenvalues.
fn complex_spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    const MAX_ITER: usize = 5000;
    for eps in [f64::EPSILON, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10] {
        if let Some(schur) = Schur::try_new(m.clone(), eps, MAX_ITER) {
            return Ok(schur.complex_eigenvalues().iter().cloned().collect());
        }
    }
    Err(Error::NoConvergence {
        residual: f64::NAN,
        iterations: MAX_ITER,
    })
}

pub fn char_functional_block(
    block: &BlockKernel,
    n: usize,
    x: f64,
    mean: f64,
) -> Result<CharFunctionalResult> {
    BlockDeterminant::new(block, n)?.with_mean(mean).eval(x)
}

/// Scalar `N x N` form of the block determinant on `Δ`.
///
/// With `p = S(·, a) - S(·, b)`, `s = S(·, a) + S(·, b)`, `σ(μ) = (Ψ_Δ, S(·, μ))`
/// and `χ = (Ψ_Δ, D(·, μ))` integrated over `Δ`:
///
/// * β = 1: `det(1 + δK) = (1 + δχ) det(1 + (2δ + δ²) S - ((δ + δ²)/2) s w^T
///   - δ² / (1 + δχ) p (φ + δη)^T)`, `φ = (2σ - Σ/2) w`, `η = (σ - Σ/2) w`,
/// * β = 4: `det(1 + δK) = (1 + δχ/2) det(1 + δS - (δ/4) s w^T
///   - (δ²/4) / (1 + δχ/2) p φ^T)`,
///
/// where `Σ = σ(a) + σ(b)`.
#[derive(Debug, Clone)]
pub struct ScalarReduction {
    beta: Beta,
    n: usize,
    mean: f64,
    s: DMatrix<f64>,
    sum_col: DVector<f64>,
    diff_col: DVector<f64>,
    w: DVector<f64>,
    sigma: DVector<f64>,
    sigma_ends: f64,
    chi: f64,
}

impl ScalarReduction {
    pub fn new(kernel: &MatrixKernel<'_>, a: f64, b: f64, nq: usize) -> Result<Self> {
        let ops = kernel.ops();
        check_bulk_interval(ops.system().measure(), a, b)?;
        let grid = LegendreGrid::new(a, b, nq);
        let t = grid.nodes();
        let w = DVector::from_column_slice(grid.weights());
        let bt = ops.basis_at(t);
        let bab = ops.basis_at(&[a, b]);
        let coef = kernel.coefficients();
        let s_raw = kernel.s_matrix(&bt, &bt);
        let s_ends = kernel.s_matrix(&bt, &bab); // S(t_i, a), S(t_i, b)
        // (Ψ, L_j) from boundary values of eps L
        let el = kernel.eps_left(&bab);
        let psi_l = (el.row(0) + el.row(1)) * 0.5;
        let pc = psi_l * coef; // 1 x n
        let sigma = (&pc * kernel.right(&bt).transpose()).transpose();
        let r_ab = kernel.right(&bab);
        let sigma_ends = (&pc * r_ab.transpose()).sum();
        let chi_density = -(&pc * kernel.right_derivative(&bt).transpose()).transpose();
        let chi = chi_density.dot(&w);
        let mut s = s_raw.clone();
        for j in 0..nq {
            s.column_mut(j).scale_mut(w[j]);
        }
        let factor = kernel.block_factor();
        let mean = factor * (0..nq).map(|i| s[(i, i)]).sum::<f64>();
        Ok(Self {
            beta: kernel.beta(),
            n: kernel.n(),
            mean,
            s,
            sum_col: s_ends.column(0) + s_ends.column(1),
            diff_col: s_ends.column(0) - s_ends.column(1),
            w,
            sigma,
            sigma_ends,
            chi,
        })
    }

    pub fn mean_count(&self) -> f64 {
        self.mean
    }

    /// `(prefactor, matrix)` with `det(1 + δK[Δ]) = prefactor * det(matrix)`.
    fn factors(&self, delta: f64) -> (f64, DMatrix<f64>) {
        let nq = self.w.len();
        let id = DMatrix::<f64>::identity(nq, nq);
        let half_ends = 0.5 * self.sigma_ends;
        match self.beta {
            Beta::Four => {
                let pre = 1.0 + 0.5 * delta * self.chi;
                let phi = (2.0 * &self.sigma).add_scalar(-half_ends).component_mul(&self.w);
                let m = id + delta * &self.s
                    - (0.25 * delta) * &self.sum_col * self.w.transpose()
                    - (0.25 * delta * delta / pre) * &self.diff_col * phi.transpose();
                (pre, m)
            }
            _ => {
                let pre = 1.0 + delta * self.chi;
                let phi = (2.0 * &self.sigma).add_scalar(-half_ends).component_mul(&self.w);
                let eta = self.sigma.add_scalar(-half_ends).component_mul(&self.w);
                let m = id + (2.0 * delta + delta * delta) * &self.s
                    - (0.5 * (delta + delta * delta)) * &self.sum_col * self.w.transpose()
                    - (delta * delta / pre) * &self.diff_col * (phi + delta * eta).transpose();
                (pre, m)
            }
        }
    }

    /// Exact reduced value of `½ log det(1 + δ_n K[Δ])`, continued along `x`.
    pub fn eval(&self, x: f64) -> Result<CharFunctionalResult> {
        self.eval_with(x, |d| self.factors(d), Method::ScalarReduced)
    }

    /// The reduction with every rank-one term dropped:
    /// `det(1 + (2δ + δ²) S[Δ])` for β = 1, `det(1 + δ S[Δ])` for β = 4.
    pub fn eval_without_rank_one(&self, x: f64) -> Result<CharFunctionalResult> {
        let nq = self.w.len();
        self.eval_with(
            x,
            |d| {
                let c = if self.beta == Beta::Four { d } else { 2.0 * d + d * d };
                (1.0, DMatrix::identity(nq, nq) + c * &self.s)
            },
            Method::ScalarReduced,
        )
    }

    fn eval_with<F>(&self, x: f64, factors: F, method: Method) -> Result<CharFunctionalResult>
    where
        F: Fn(f64) -> (f64, DMatrix<f64>),
    {
        if x == 0.0 {
            return Ok(CharFunctionalResult::zero(0.0, self.n, self.beta, method, self.mean));
        }
        let mut last = 0.0;
        let mut max_inc: f64 = 0.0;
        for xp in path(x) {
            let (_, delta) = delta_of(xp, self.n)?;
            let (pre, m) = factors(delta);
            let det = pre * m.determinant();
            if det <= 0.0 || !det.is_finite() {
                return Err(Error::Branch { x: xp, factor: det });
            }
            let cur = 0.5 * det.ln() - scaled_x(xp, self.n) * self.mean;
            max_inc = max_inc.max((cur - last).abs());
            last = cur;
        }
        let (xn, delta) = delta_of(x, self.n)?;
        Ok(CharFunctionalResult {
            x,
            x_n: xn,
            delta,
            log_phi: last,
            mean_count: self.mean,
            method,
            n: self.n,
            beta: self.beta,
            std_error: None,
            imag_part: 0.0,
            max_path_increment: max_inc,
        })
    }
}

pub fn char_functional_scalar_reduced(
    kernel: &MatrixKernel<'_>,
    a: f64,
    b: f64,
    nq: usize,
    x: f64,
) -> Result<CharFunctionalResult> {
    ScalarReduction::new(kernel, a, b, nq)?.eval(x)
}

/// `E prod (1 + δ 1_Δ(λ_i))` as a ratio of `n x n` Pfaffian Gram matrices in
/// the orthonormal basis, independent of the kernels:
///
/// * β = 1: entries `(eps(f psi_j), f psi_k)`,
/// * β = 4: entries `∫ (psi_j psi_k' - psi_j' psi_k) f`,
///
/// with `f = 1 + δ 1_Δ`.
#[derive(Debug, Clone)]
pub struct GramFunctional {
    beta: Beta,
    n: usize,
    base_inv: DMatrix<f64>,
    linear: DMatrix<f64>,
    quadratic: DMatrix<f64>,
    mean: f64,
}

impl GramFunctional {
    pub fn new(ops: &OperatorMatrices, beta: Beta, a: f64, b: f64, nq: usize) -> Result<Self> {
        let n = ops.n();
        let grid = LegendreGrid::new(a, b, nq);
        let basis = ops.basis_at(grid.nodes());
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(grid.weights()));
        let psi = basis.psi.columns(0, n).into_owned();
        let (base, linear, quadratic) = match beta {
            Beta::One => {
                let eps = basis.eps.columns(0, n).into_owned();
                let a_mat = eps.transpose() * &w * &psi;
                let eps_delta = crate::matrix_kernels::epsilon_matrix(&grid) * &psi;
                let b_mat = eps_delta.transpose() * &w * &psi;
                (ops.m_n(), &a_mat - a_mat.transpose(), b_mat)
            }
            Beta::Four => {
                let dpsi = basis.dpsi.columns(0, n).into_owned();
                let cross = psi.transpose() * &w * &dpsi;
                (-2.0 * ops.d_n(), &cross - cross.transpose(), DMatrix::zeros(n, n))
            }
            Beta::Two => {
                return Err(Error::Config("use the scalar determinant for beta = 2".into()))
            }
        };
        let base_inv = base
            .try_inverse()
            .ok_or_else(|| Error::Singular("Gram base matrix".into()))?;
        let mean = 0.5 * (&base_inv * &linear).trace();
        Ok(Self {
            beta,
            n,
            base_inv,
            linear,
            quadratic,
            mean,
        })
    }

    pub fn mean_count(&self) -> f64 {
        self.mean
    }

    pub fn eval(&self, x: f64) -> Result<CharFunctionalResult> {
        if x == 0.0 {
            return Ok(CharFunctionalResult::zero(0.0, self.n, self.beta, Method::Gram, self.mean));
        }
        let id = DMatrix::<f64>::identity(self.n, self.n);
        let mut last = 0.0;
        let mut max_inc: f64 = 0.0;
        for xp in path(x) {
            let (_, d) = delta_of(xp, self.n)?;
            let m = &id + &self.base_inv * (d * &self.linear + d * d * &self.quadratic);
            let det = m.determinant();
            if det <= 0.0 || !det.is_finite() {
                return Err(Error::Branch { x: xp, factor: det });
            }
            let cur = 0.5 * det.ln() - scaled_x(xp, self.n) * self.mean;
            max_inc = max_inc.max((cur - last).abs());
            last = cur;
        }
        let (xn, delta) = delta_of(x, self.n)?;
        Ok(CharFunctionalResult {
            x,
            x_n: xn,
            delta,
            log_phi: last,
            mean_count: self.mean,
            method: Method::Gram,
            n: self.n,
            beta: self.beta,
            std_error: None,
            imag_part: 0.0,
            max_path_increment: max_inc,
        })
    }
}

/// Left-hand sides of the bounds controlling the finite-rank remainder,
/// maximized over the index window `[-(2m-1), 2m-1]`.
#[derive(Debug, Clone, Serialize)]
pub struct CorrectionBounds {
    pub n: usize,
    pub x: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    /// `max |n (R psi_{n-j}, eps psi_{n+k})_Δ|`, `R = (1 + δ̃ K[Δ])^{-1}`.
    pub resolvent_pairing: f64,
    /// `max |n (1_Δ psi_{n+k}, eps psi_{n+j})|`.
    pub direct_pairing: f64,
    /// `max |n (psi_{n+k}, K[Δ] eps psi_{n+j})|`.
    pub projected_pairing: f64,
    /// `max ||n (K[Δ] - K[Δ]^2) eps psi_{n+j}||`.
    pub defect_eps: f64,
    /// `max |sqrt(n) (1_Δ psi_{n+k}, 1_Δ)|`.
    pub mean_pairing: f64,
    /// `max |sqrt(n) (K[Δ] psi_{n+k}, 1_Δ)|`.
    pub projected_mean_pairing: f64,
    /// `||sqrt(n) (K[Δ] - K[Δ]^2) 1_Δ||`.
    pub defect_indicator: f64,
}

pub fn widom_correction_bounds(
    ops: &OperatorMatrices,
    kernel: &DiscretizedKernel,
    x: f64,
) -> Result<CorrectionBounds> {
    let n = ops.n();
    let nf = n as f64;
    let r = 2 * ops.system().potential().half_degree() - 1;
    let (_, delta) = delta_of(x, n)?;
    let dt = 2.0 * delta + delta * delta;
    let t = kernel.nodes();
    let sw = DVector::from_iterator(t.len(), kernel.weights().iter().map(|w| w.sqrt()));
    let basis = ops.basis_at(t);
    let b = kernel.factor();
    // functions in symmetrized coordinates: u_i = sqrt(w_i) f(t_i)
    let coords = |m: &DMatrix<f64>, l: usize| m.column(l).component_mul(&sw);
    let apply_k = |u: &DVector<f64>| b * (b.transpose() * u);
    // (1 + dt B B^T)^{-1} = 1 - dt B (1 + dt B^T B)^{-1} B^T
    let small = DMatrix::<f64>::identity(n, n) + dt * kernel.gram();
    let small_lu = small.lu();
    let apply_r = |u: &DVector<f64>| -> DVector<f64> {
        let inner = small_lu.solve(&(b.transpose() * u)).unwrap_or_else(|| DVector::zeros(n));
        u - dt * (b * inner)
    };
    let ones = sw.clone();
    let k_ones = apply_k(&ones);
    let defect_indicator = nf.sqrt() * (&k_ones - apply_k(&k_ones)).norm();

    let mut out = CorrectionBounds {
        n,
        x,
        delta,
        delta_tilde: dt,
        resolvent_pairing: 0.0,
        direct_pairing: 0.0,
        projected_pairing: 0.0,
        defect_eps: 0.0,
        mean_pairing: 0.0,
        projected_mean_pairing: 0.0,
        defect_indicator,
    };
    for j in 0..=2 * r {
        let eps_j = coords(&basis.eps, n - r + j);
        let k_eps = apply_k(&eps_j);
        out.defect_eps = out
            .defect_eps
            .max(nf * (&k_eps - apply_k(&k_eps)).norm());
        let psi_j = coords(&basis.psi, n - r + j);
        out.mean_pairing = out.mean_pairing.max(nf.sqrt() * psi_j.dot(&ones).abs());
        out.projected_mean_pairing = out
            .projected_mean_pairing
            .max(nf.sqrt() * apply_k(&psi_j).dot(&ones).abs());
        let r_psi = apply_r(&psi_j);
        for k in 0..=2 * r {
            let eps_k = coords(&basis.eps, n - r + k);
            out.resolvent_pairing = out.resolvent_pairing.max(nf * r_psi.dot(&eps_k).abs());
            out.direct_pairing = out.direct_pairing.max(nf * psi_j.dot(&eps_k).abs());
            out.projected_pairing = out
                .projected_pairing
                .max(nf * psi_j.dot(&apply_k(&eps_k)).abs());
        }
    }
    Ok(out)
}

/// `½ (1_{t<a} - 1_{t>b})` paired with `f` on a quadrature: `(f, Ψ_Δ)`.
pub fn profile_pairing(a: f64, b: f64, nodes: &[f64], weights: &[f64], f: &[f64]) -> f64 {
    nodes
        .iter()
        .zip(weights)
        .zip(f)
        .map(|((&t, &w), &v)| interval_profile(a, b, t) * w * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_kernels::{assemble_block_kernel, build_operator_matrices, build_s1, build_s4};
    use crate::orthopoly::{build_system, default_top, project_kernel, required_nodes};
    use crate::potential::PolynomialPotential;

    #[test]
    fn beta2_basic_properties() {
        let v = PolynomialPotential::gaussian();
        let sys = build_system(&v, 100, default_top(&v, 100)).unwrap();
        let k = project_kernel(&sys, -0.5, 0.5, required_nodes(&sys, -0.5, 0.5)).unwrap();
        let det = Beta2Determinant::new(&k, 100);
        assert_eq!(det.eval(0.0).unwrap().log_phi, 0.0);
        // second derivative at 0 against the variance trace
        let h = 1e-3;
        let f = |x: f64| det.eval(x).unwrap().log_phi;
        let second = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        let var = variance_trace(&k).unwrap();
        let target = std::f64::consts::PI.powi(2) / (100f64).ln() * var;
        assert!((second - target).abs() < 1e-4, "{second} vs {target}");
        // convexity on a grid
        let xs: Vec<f64> = (0..11).map(|i| -2.0 + 0.4 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for i in 1..10 {
            assert!(ys[i - 1] + ys[i + 1] - 2.0 * ys[i] > 0.0);
        }
    }

    #[test]
    fn full_support_has_no_fluctuation() {
        let v = PolynomialPotential::gaussian();
        let sys = build_system(&v, 40, default_top(&v, 40)).unwrap();
        assert!(variance_trace(&sys.full_support_kernel()).unwrap().abs() < 1e-6);
    }

    #[test]
    fn reductions_agree_with_block_and_gram() {
        let v = PolynomialPotential::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).unwrap();
        let sys = build_system(&v, 8, default_top(&v, 8)).unwrap();
        let ops = build_operator_matrices(&sys).unwrap();
        let (a, b) = (-0.6, 0.5);
        for kernel in [build_s1(&ops).unwrap(), build_s4(&ops).unwrap()] {
            let block = assemble_block_kernel(&kernel, a, b, 48).unwrap();
            let bd = BlockDeterminant::new(&block, 8).unwrap();
            let red = ScalarReduction::new(&kernel, a, b, 48).unwrap();
            let gram = GramFunctional::new(&ops, kernel.beta(), a, b, 48).unwrap();
            assert!((bd.mean_count() - red.mean_count()).abs() < 1e-10);
            assert!((bd.mean_count() - gram.mean_count()).abs() < 1e-8);
            for x in [-0.5, 0.5, 1.0] {
                let p = bd.eval(x).unwrap();
                let q = red.eval(x).unwrap();
                let g = gram.eval(x).unwrap();
                assert!(p.imag_part.abs() < 1e-8);
                assert!((p.log_phi - q.log_phi).abs() < 1e-9, "{:?} {p:?} {q:?}", kernel.beta());
                assert!((p.log_phi - g.log_phi).abs() < 1e-8, "{:?} {p:?} {g:?}", kernel.beta());
            }
        }
    }

    #[test]
    fn correction_bounds_are_finite() {
        let v = PolynomialPotential::gaussian();
        let sys = build_system(&v, 50, default_top(&v, 50)).unwrap();
        let ops = build_operator_matrices(&sys).unwrap();
        let k = project_kernel(&sys, -1.0, 1.0, required_nodes(&sys, -1.0, 1.0)).unwrap();
        let rep = widom_correction_bounds(&ops, &k, 1.0).unwrap();
        assert!(rep.defect_indicator.is_finite() && rep.resolvent_pairing.is_finite());
        assert!(rep.mean_pairing < 5.0);
    }
}
