//! Matrix kernels of the β = 1 and β = 4 ensembles.
//!
//! Both are written as `S(x, y) = sum_{j,k<n} L_j(x) C_jk R_k(y)`:
//!
//! | β | `L`     | `R`      | `C`         |
//! |---|---------|----------|-------------|
//! | 1 | `psi`   | `eps psi`| `M_n^{-1}`  |
//! | 4 | `psi'`  | `psi`    | `-D_n^{-1}` |
//!
//! with `D_jk = (psi_j', psi_k)` and `M_jk = (eps psi_j, psi_k)`. The other
//! blocks follow: `D(x, y) = -d/dy S(x, y)`, `I(x, y) = eps_x S(x, y)`, and
//! `S^T(x, y) = S(y, x)`. With these signs `∫ S(x, x) dx = n`.

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::{check_bulk_interval, WeightedPolySystem};
use crate::quadrature::{GaussLegendre, LegendreGrid};

/// Antisymmetry tolerance for `D` and `M`.
pub const ANTISYMMETRY_TOL: f64 = 1e-8;

/// Symmetry class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    One,
    Two,
    Four,
}

impl Beta {
    pub fn value(self) -> f64 {
        match self {
            Beta::One => 1.0,
            Beta::Two => 2.0,
            Beta::Four => 4.0,
        }
    }

    pub const ALL: [Beta; 3] = [Beta::One, Beta::Two, Beta::Four];
}

impl TryFrom<u8> for Beta {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Beta::One),
            2 => Ok(Beta::Two),
            4 => Ok(Beta::Four),
            other => Err(Error::Config(format!("beta must be 1, 2 or 4, got {other}"))),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        b.value() as u8
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// `(eps f)(x_i) = ∫_lo^{x_i} f - ½ ∫ f` at the nodes of `grid`.
pub fn epsilon_apply(grid: &LegendreGrid, values: &[f64]) -> Vec<f64> {
    let half_total = 0.5 * grid.integrate(values);
    grid.antiderivative_at_nodes(values)
        .into_iter()
        .map(|c| c - half_total)
        .collect()
}

/// `psi_l`, `psi_l'` and `eps psi_l` at a set of points, columns `l`.
#[derive(Debug, Clone)]
pub struct BasisValues {
    pub psi: DMatrix<f64>,
    pub dpsi: DMatrix<f64>,
    pub eps: DMatrix<f64>,
}

/// `D` and `M` up to the extended index `n + 2m - 1`, with the grid data
/// needed to evaluate the matrix kernels anywhere.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    system: WeightedPolySystem,
    grid: LegendreGrid,
    ext: usize,
    psi_grid: DMatrix<f64>,
    dpsi_grid: DMatrix<f64>,
    eps_grid: DMatrix<f64>,
    totals: Vec<f64>,
    d: DMatrix<f64>,
    m: DMatrix<f64>,
}

pub fn build_operator_matrices(system: &WeightedPolySystem) -> Result<OperatorMatrices> {
    let n = system.n();
    let ext = n + 2 * system.potential().half_degree() - 1;
    if system.top() < ext {
        return Err(Error::Config(format!(
            "system has L = {}, matrix kernels need L >= {ext}",
            system.top()
        )));
    }
    let (nodes, weights) = system.quadrature();
    let (lo, hi) = system.domain();
    let grid = LegendreGrid::new(lo, hi, nodes.len());
    let (psi_grid, dpsi_grid) = system.psi_tables_with_derivative(grid.nodes(), ext);
    let cols: Vec<(Vec<f64>, f64)> = (0..=ext)
        .into_par_iter()
        .map(|l| {
            let col: Vec<f64> = psi_grid.column(l).iter().cloned().collect();
            (epsilon_apply(&grid, &col), grid.integrate(&col))
        })
        .collect();
    let eps_grid = DMatrix::from_fn(grid.len(), ext + 1, |i, l| cols[l].0[i]);
    let totals = cols.iter().map(|c| c.1).collect();
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
    let d = dpsi_grid.transpose() * &w * &psi_grid;
    let m = eps_grid.transpose() * &w * &psi_grid;
    let ops = OperatorMatrices {
        system: system.clone(),
        grid,
        ext,
        psi_grid,
        dpsi_grid,
        eps_grid,
        totals,
        d,
        m,
    };
    let (rd, rm) = ops.antisymmetry();
    if rd > ANTISYMMETRY_TOL {
        return Err(Error::Identity {
            name: "D antisymmetry",
            residual: rd,
            tolerance: ANTISYMMETRY_TOL,
        });
    }
    if rm > ANTISYMMETRY_TOL {
        return Err(Error::Identity {
            name: "M antisymmetry",
            residual: rm,
            tolerance: ANTISYMMETRY_TOL,
        });
    }
    Ok(ops)
}

fn antisymmetry_residual(a: &DMatrix<f64>) -> f64 {
    (a + a.transpose()).amax()
}

impl OperatorMatrices {
    pub fn system(&self) -> &WeightedPolySystem {
        &self.system
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// Highest index carried, `n + 2m - 1`.
    pub fn ext(&self) -> usize {
        self.ext
    }

    pub fn grid(&self) -> &LegendreGrid {
        &self.grid
    }

    /// `D` over indices `0..=ext`.
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn d_n(&self) -> DMatrix<f64> {
        self.d.view((0, 0), (self.n(), self.n())).into_owned()
    }

    pub fn m_n(&self) -> DMatrix<f64> {
        self.m.view((0, 0), (self.n(), self.n())).into_owned()
    }

    /// `(max |D + D^T|, max |M + M^T|)` over the extended range.
    pub fn antisymmetry(&self) -> (f64, f64) {
        (antisymmetry_residual(&self.d), antisymmetry_residual(&self.m))
    }

    /// 2-norm condition number of `M_n`.
    pub fn m_condition(&self) -> f64 {
        condition(&self.m_n())
    }

    /// `T_n`: the bottom-right `(2m - 1) x (2m - 1)` block of `D_n M_n`.
    pub fn t_block(&self) -> DMatrix<f64> {
        let n = self.n();
        let r = 2 * self.system.potential().half_degree() - 1;
        let dm = self.d_n() * self.m_n();
        dm.view((n - r, n - r), (r, r)).into_owned()
    }

    /// `∫ psi_l` for `l <= ext`.
    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    /// Values at the global grid nodes.
    pub fn grid_basis(&self) -> BasisValues {
        BasisValues {
            psi: self.psi_grid.clone(),
            dpsi: self.dpsi_grid.clone(),
            eps: self.eps_grid.clone(),
        }
    }

    pub fn basis_at(&self, xs: &[f64]) -> BasisValues {
        let (psi, dpsi) = self.system.psi_tables_with_derivative(xs, self.ext);
        let half: Vec<f64> = self.totals.iter().map(|t| 0.5 * t).collect();
        let rows: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|&x| {
                let row = DVector::from_vec(self.grid.antiderivative_row(x));
                (0..=self.ext)
                    .map(|l| row.dot(&self.psi_grid.column(l)) - half[l])
                    .collect()
            })
            .collect();
        let eps = DMatrix::from_fn(xs.len(), self.ext + 1, |i, l| rows[i][l]);
        BasisValues { psi, dpsi, eps }
    }
}

fn condition(a: &DMatrix<f64>) -> f64 {
    let sv = SVD::new(a.clone(), false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn invert(a: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let cond = condition(&a);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Singular(format!("{what} (condition {cond:.3e})")));
    }
    a.try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// The kernel `S` of a β = 1 or β = 4 ensemble with its derived blocks.
#[derive(Debug, Clone)]
pub struct MatrixKernel<'a> {
    beta: Beta,
    ops: &'a OperatorMatrices,
    coef: DMatrix<f64>,
}

/// Blocks of the matrix kernel on a tensor grid `xs × ys`.
#[derive(Debug, Clone)]
pub struct KernelBlocks {
    pub s: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub i: DMatrix<f64>,
    pub st: DMatrix<f64>,
}

/// β = 1 kernel `S(x, y) = sum psi_j(x) (M_n^{-1})_jk (eps psi_k)(y)`; needs `n` even.
pub fn build_s1(ops: &OperatorMatrices) -> Result<MatrixKernel<'_>> {
    if ops.n() % 2 == 1 {
        return Err(Error::Singular(format!("M_n is singular for odd n = {}", ops.n())));
    }
    let coef = invert(ops.m_n(), "M_n")?;
    Ok(MatrixKernel {
        beta: Beta::One,
        ops,
        coef,
    })
}

/// β = 4 kernel `S(x, y) = -sum psi_j'(x) (D_n^{-1})_jk psi_k(y)`, describing
/// `n / 2` particles once the overall factor ½ is applied.
pub fn build_s4(ops: &OperatorMatrices) -> Result<MatrixKernel<'_>> {
    if ops.n() % 2 == 1 {
        return Err(Error::Singular(format!("D_n is singular for odd n = {}", ops.n())));
    }
    let coef = -invert(ops.d_n(), "D_n")?;
    Ok(MatrixKernel {
        beta: Beta::Four,
        ops,
        coef,
    })
}

impl<'a> MatrixKernel<'a> {
    /// Kernel built from an arbitrary coefficient matrix in place of
    /// `M_n^{-1}`; used for sensitivity controls.
    pub fn with_coefficients(beta: Beta, ops: &'a OperatorMatrices, coef: DMatrix<f64>) -> Self {
        assert!(beta != Beta::Two, "matrix kernels exist for beta 1 and 4");
        Self { beta, ops, coef }
    }

    pub fn beta(&self) -> Beta {
        self.beta
    }

    pub fn ops(&self) -> &'a OperatorMatrices {
        self.ops
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coef
    }

    /// Number of particles described by the kernel.
    pub fn particles(&self) -> f64 {
        match self.beta {
            Beta::Four => 0.5 * self.n() as f64,
            _ => self.n() as f64,
        }
    }

    /// Overall factor in front of the block kernel.
    pub fn block_factor(&self) -> f64 {
        match self.beta {
            Beta::Four => 0.5,
            _ => 1.0,
        }
    }

    fn cols(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.columns(0, self.n()).into_owned()
    }

    pub fn left(&self, b: &BasisValues) -> DMatrix<f64> {
        match self.beta {
            Beta::Four => self.cols(&b.dpsi),
            _ => self.cols(&b.psi),
        }
    }

    pub fn eps_left(&self, b: &BasisValues) -> DMatrix<f64> {
        match self.beta {
            Beta::Four => self.cols(&b.psi),
            _ => self.cols(&b.eps),
        }
    }

    pub fn right(&self, b: &BasisValues) -> DMatrix<f64> {
        match self.beta {
            Beta::Four => self.cols(&b.psi),
            _ => self.cols(&b.eps),
        }
    }

    pub fn right_derivative(&self, b: &BasisValues) -> DMatrix<f64> {
        match self.beta {
            Beta::Four => self.cols(&b.dpsi),
            _ => self.cols(&b.psi),
        }
    }

    /// `S(x_i, y_j)`.
    pub fn s_matrix(&self, bx: &BasisValues, by: &BasisValues) -> DMatrix<f64> {
        self.left(bx) * &self.coef * self.right(by).transpose()
    }

    pub fn blocks(&self, bx: &BasisValues, by: &BasisValues) -> KernelBlocks {
        let lc_x = self.left(bx) * &self.coef;
        let s = &lc_x * self.right(by).transpose();
        let d = -(&lc_x * self.right_derivative(by).transpose());
        let i = self.eps_left(bx) * &self.coef * self.right(by).transpose();
        let st = (self.left(by) * &self.coef * self.right(bx).transpose()).transpose();
        KernelBlocks { s, d, i, st }
    }

    pub fn s(&self, x: f64, y: f64) -> f64 {
        let b = self.ops.basis_at(&[x, y]);
        let l = self.left(&b);
        let r = self.right(&b);
        (l.row(0) * &self.coef * r.row(1).transpose())[(0, 0)]
    }

    /// `∫ S(x, x) dx` on the global grid.
    pub fn trace(&self) -> f64 {
        let b = self.ops.grid_basis();
        let lc = self.left(&b) * &self.coef;
        let r = self.right(&b);
        let w = self.ops.grid.weights();
        (0..w.len()).map(|i| w[i] * lc.row(i).dot(&r.row(i))).sum()
    }

    /// `max |eps_x D(x, y) - S(y, x)|` with `eps` applied numerically along
    /// `x` on the global grid, for each `y` in `ys`.
    pub fn epsilon_d_residual(&self, ys: &[f64]) -> f64 {
        let grid = self.ops.grid_basis();
        let by = self.ops.basis_at(ys);
        let lc = self.left(&grid) * &self.coef;
        let dcols = -(&lc * self.right_derivative(&by).transpose()); // D(x_i, y_j)
        let st = self.s_matrix(&by, &grid).transpose(); // S(y_j, x_i) at (i, j)
        (0..ys.len())
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = dcols.column(j).iter().cloned().collect();
                let e = epsilon_apply(&self.ops.grid, &col);
                e.iter()
                    .enumerate()
                    .map(|(i, v)| (v - st[(i, j)]).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Discretized `K_{n,β}[Δ]` with plain right weighting `K(t_i, t_j) w_j`.
#[derive(Debug, Clone)]
pub struct BlockKernel {
    pub beta: Beta,
    pub interval: (f64, f64),
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `2N x 2N` matrix, overall factor included.
    pub matrix: DMatrix<f64>,
    /// Unweighted kernel values on the `Δ` grid.
    pub blocks: KernelBlocks,
    /// Nyström matrix of `1_Δ eps 1_Δ`.
    pub eps_delta: DMatrix<f64>,
}

/// Nyström matrix of `eps` restricted to `[a, b]` on the nodes of `grid`.
pub fn epsilon_matrix(grid: &LegendreGrid) -> DMatrix<f64> {
    let n = grid.len();
    let q = grid.antiderivative_matrix();
    let w = grid.weights();
    DMatrix::from_fn(n, n, |i, j| q[i * n + j] - 0.5 * w[j])
}

pub fn assemble_block_kernel(
    kernel: &MatrixKernel<'_>,
    a: f64,
    b: f64,
    nq: usize,
) -> Result<BlockKernel> {
    check_bulk_interval(kernel.ops.system.measure(), a, b)?;
    let grid = LegendreGrid::new(a, b, nq);
    let t = grid.nodes().to_vec();
    let w = grid.weights().to_vec();
    let basis = kernel.ops.basis_at(&t);
    let blocks = kernel.blocks(&basis, &basis);
    let eps_delta = epsilon_matrix(&grid);
    let f = kernel.block_factor();
    let mut matrix = DMatrix::zeros(2 * nq, 2 * nq);
    for i in 0..nq {
        for j in 0..nq {
            let wj = w[j];
            matrix[(i, j)] = f * blocks.s[(i, j)] * wj;
            matrix[(i, nq + j)] = f * blocks.d[(i, j)] * wj;
            let mut lower = blocks.i[(i, j)] * wj;
            if kernel.beta == Beta::One {
                lower -= eps_delta[(i, j)];
            }
            matrix[(nq + i, j)] = f * lower;
            matrix[(nq + i, nq + j)] = f * blocks.st[(i, j)] * wj;
        }
    }
    Ok(BlockKernel {
        beta: kernel.beta,
        interval: (a, b),
        nodes: t,
        weights: w,
        matrix,
        blocks,
        eps_delta,
    })
}

impl BlockKernel {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// `max |A + A^T|` for the kernel matrix `A = K J`,
    /// `J = [[0, 1], [-1, 0]]`, built from unweighted kernel values.
    pub fn skew_residual(&self) -> f64 {
        let n = self.size();
        let bl = &self.blocks;
        let sgn = |i: usize, j: usize| {
            if self.beta == Beta::One && i != j {
                0.5 * (self.nodes[i] - self.nodes[j]).signum()
            } else {
                0.0
            }
        };
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = -bl.d[(i, j)];
                a[(i, n + j)] = bl.s[(i, j)];
                a[(n + i, j)] = -bl.st[(i, j)];
                a[(n + i, n + j)] = bl.i[(i, j)] - sgn(i, j);
            }
        }
        antisymmetry_residual(&a)
    }

    /// `max |S^T - (S)^T|` on the grid.
    pub fn transpose_residual(&self) -> f64 {
        (&self.blocks.st - self.blocks.s.transpose()).amax()
    }

    /// Mean count: `½`-weighted trace of the `S` block for β = 4.
    pub fn mean_count(&self) -> f64 {
        let f = if self.beta == Beta::Four { 0.5 } else { 1.0 };
        f * (0..self.size())
            .map(|i| self.blocks.s[(i, i)] * self.weights[i])
            .sum::<f64>()
    }
}

/// `S_{n,1} = K_n + n sum F_jk psi_{n+j} ⊗ eps psi_{n+k}`,
/// `j, k ∈ [-(2m-1), 2m-1]`, fitted by least squares.
#[derive(Debug, Clone, Serialize)]
pub struct WidomDecomposition {
    pub n: usize,
    /// Row `j + 2m - 1`, column `k + 2m - 1`.
    #[serde(skip)]
    pub f: DMatrix<f64>,
    pub max_abs_f: f64,
    /// `max |S - K_n - correction| / max |S|` on the fit grid.
    pub relative_residual: f64,
    #[serde(skip)]
    pub t_block: DMatrix<f64>,
}

/// Relative residual allowed in the representation.
pub const WIDOM_TOL: f64 = 1e-6;

pub fn widom_decompose(kernel: &MatrixKernel<'_>) -> Result<WidomDecomposition> {
    if kernel.beta != Beta::One {
        return Err(Error::Config(
            "the finite-rank representation is fitted for beta = 1".into(),
        ));
    }
    let ops = kernel.ops;
    let n = ops.n();
    let r = 2 * ops.system.potential().half_degree() - 1;
    if n < r {
        return Err(Error::Config(format!("n = {n} too small for the index window")));
    }
    let (lo, hi) = ops.system.domain();
    let pts: Vec<f64> = GaussLegendre::new(200).mapped(lo, hi).0;
    let basis = ops.basis_at(&pts);
    let s = kernel.s_matrix(&basis, &basis);
    let psi_n = basis.psi.columns(0, n);
    let k = &psi_n * psi_n.transpose();
    let resid = &s - &k;
    let idx: Vec<usize> = (n - r..=n + r).collect();
    let phi = DMatrix::from_fn(pts.len(), idx.len(), |i, c| basis.psi[(i, idx[c])]);
    let eps = DMatrix::from_fn(pts.len(), idx.len(), |i, c| basis.eps[(i, idx[c])]);
    let phi_pinv = pinv(&phi)?;
    let eps_pinv = pinv(&eps)?;
    let f = (&phi_pinv * &resid * eps_pinv.transpose()) / n as f64;
    let fitted = &phi * &f * eps.transpose() * n as f64;
    let relative_residual = (&resid - fitted).amax() / s.amax();
    let max_abs_f = f.amax();
    let out = WidomDecomposition {
        n,
        f,
        max_abs_f,
        relative_residual,
        t_block: ops.t_block(),
    };
    if relative_residual > WIDOM_TOL {
        return Err(Error::Identity {
            name: "finite-rank representation",
            residual: relative_residual,
            tolerance: WIDOM_TOL,
        });
    }
    Ok(out)
}

fn pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = SVD::new(a.clone(), true, true);
    let tol = 1e-13 * svd.singular_values.max();
    svd.pseudo_inverse(tol)
        .map_err(|e| Error::Singular(e.to_string()))
}

/// `½ (1_{t<a} - 1_{t>b})`.
pub fn interval_profile(a: f64, b: f64, t: f64) -> f64 {
    if t < a {
        0.5
    } else if t > b {
        -0.5
    } else {
        0.0
    }
}

/// Rank-one operator `(P f)(x) = (S(x, a) - S(x, b)) (f, Ψ_Δ)` on a grid.
#[derive(Debug, Clone)]
pub struct RankOneOperator {
    /// `S(x_i, a) - S(x_i, b)`.
    pub column: Vec<f64>,
    /// `Ψ_Δ(x_j) w_j`.
    pub row: Vec<f64>,
}

pub fn rank_one_p(
    kernel: &MatrixKernel<'_>,
    a: f64,
    b: f64,
    nodes: &[f64],
    weights: &[f64],
) -> RankOneOperator {
    let ops = kernel.ops;
    let bx = ops.basis_at(nodes);
    let bab = ops.basis_at(&[a, b]);
    let s = kernel.s_matrix(&bx, &bab);
    RankOneOperator {
        column: (0..nodes.len()).map(|i| s[(i, 0)] - s[(i, 1)]).collect(),
        row: nodes
            .iter()
            .zip(weights)
            .map(|(&t, &w)| interval_profile(a, b, t) * w)
            .collect(),
    }
}

impl RankOneOperator {
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let c: f64 = self.row.iter().zip(f).map(|(r, f)| r * f).sum();
        self.column.iter().map(|p| p * c).collect()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.column.len(), self.row.len(), |i, j| {
            self.column[i] * self.row[j]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::{build_system, default_top};
    use crate::potential::PolynomialPotential;

    fn ops(v: &PolynomialPotential, n: usize) -> OperatorMatrices {
        build_operator_matrices(&build_system(v, n, default_top(v, n)).unwrap()).unwrap()
    }

    #[test]
    fn beta_wire_format() {
        assert_eq!(serde_json::to_string(&Beta::Four).unwrap(), "4");
        assert_eq!(serde_json::from_str::<Beta>("1").unwrap(), Beta::One);
        assert!(serde_json::from_str::<Beta>("3").is_err());
    }

    #[test]
    fn epsilon_of_odd_function_is_even() {
        let grid = LegendreGrid::new(-3.0, 3.0, 80);
        let f: Vec<f64> = grid.nodes().iter().map(|x| x * (-x * x).exp()).collect();
        let e = epsilon_apply(&grid, &f);
        let n = e.len();
        for i in 0..n {
            assert!((e[i] - e[n - 1 - i]).abs() < 1e-12);
            // closed form: eps f = -exp(-x^2)/2 + const; const fixed by oddness
            let x = grid.nodes()[i];
            assert!((e[i] - (-(-x * x).exp() / 2.0 + (-9.0f64).exp() / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_d_is_tridiagonal() {
        let o = ops(&PolynomialPotential::gaussian(), 12);
        let n = 12.0f64;
        let d = o.d();
        for j in 0..d.nrows() {
            for k in 0..d.ncols() {
                // psi_j' = sqrt(n) (sqrt(j) psi_{j-1} - sqrt(j+1) psi_{j+1}) / 2
                let exact = if k + 1 == j {
                    0.5 * (n * j as f64).sqrt()
                } else if k == j + 1 {
                    -0.5 * (n * (j + 1) as f64).sqrt()
                } else {
                    0.0
                };
                assert!((d[(j, k)] - exact).abs() < 1e-9, "({j},{k})");
            }
        }
        let (rd, rm) = o.antisymmetry();
        assert!(rd < 1e-10 && rm < 1e-10);
        assert!(o.m_condition().is_finite());
        for j in 0..=o.ext() {
            assert!(o.m()[(j, j)].abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_have_trace_n_and_integrate_by_parts() {
        let v = PolynomialPotential::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).unwrap();
        let o = ops(&v, 12);
        let s1 = build_s1(&o).unwrap();
        let s4 = build_s4(&o).unwrap();
        assert!((s1.trace() - 12.0).abs() < 1e-8);
        assert!((s4.trace() - 12.0).abs() < 1e-8);
        let ys = [-0.8, -0.1, 0.3, 0.9];
        assert!(s1.epsilon_d_residual(&ys) < 1e-8);
        assert!(s4.epsilon_d_residual(&ys) < 1e-8);
        let odd = ops(&v, 11);
        assert!(matches!(build_s1(&odd), Err(Error::Singular(_))));
    }

    #[test]
    fn perturbed_m_breaks_integration_by_parts() {
        let o = ops(&PolynomialPotential::gaussian(), 12);
        let mut m = o.m_n();
        let bump = 0.01 * m.amax();
        for i in 0..12 {
            m[(i, i)] += bump;
        }
        let k = MatrixKernel::with_coefficients(Beta::One, &o, m.try_inverse().unwrap());
        assert!(k.epsilon_d_residual(&[0.0, 0.5]) > 1e-4);
    }

    #[test]
    fn block_structure() {
        let o = ops(&PolynomialPotential::gaussian(), 8);
        for kernel in [build_s1(&o).unwrap(), build_s4(&o).unwrap()] {
            let bk = assemble_block_kernel(&kernel, -0.8, 0.6, 40).unwrap();
            assert!(bk.skew_residual() < 1e-10);
            assert!(bk.transpose_residual() < 1e-12);
        }
    }

    #[test]
    fn widom_representation_is_exact() {
        for v in [
            PolynomialPotential::gaussian(),
            PolynomialPotential::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).unwrap(),
        ] {
            let o = ops(&v, 12);
            let w = widom_decompose(&build_s1(&o).unwrap()).unwrap();
            assert!(w.relative_residual < 1e-9, "{}", w.relative_residual);
            // the x-part of S - K_n lies in span psi_{<n}
            let r = 2 * v.half_degree() - 1;
            for j in r..w.f.nrows() {
                assert!(w.f.row(j).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_one_operator() {
        let o = ops(&PolynomialPotential::gaussian(), 10);
        let s1 = build_s1(&o).unwrap();
        let (x, w) = GaussLegendre::new(120).mapped(o.system().domain().0, o.system().domain().1);
        let p = rank_one_p(&s1, -0.5, 0.5, &x, &w);
        let sv = SVD::new(p.matrix(), false, false).singular_values;
        let mut sv: Vec<f64> = sv.iter().cloned().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[1] < 1e-10 * sv[0]);
        let inside: Vec<f64> = x.iter().map(|&t| if t.abs() <= 0.5 { 1.0 } else { 0.0 }).collect();
        assert!(p.apply(&inside).iter().all(|v| v.abs() < 1e-14));
    }
}
