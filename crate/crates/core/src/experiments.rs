//! Experiment configurations, runners and reports.
//!
//! Each runner takes an [`ExperimentConfig`], writes its CSV tables into the
//! configured output directory (if any) and returns an [`ExperimentReport`]
//! whose `passed` flag is the conjunction of its checks.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fredholm::{
    variance_trace, Beta2Determinant, BlockDeterminant, CharFunctionalResult, GramFunctional,
    Method, ScalarReduction, IMAG_TOL,
};
use crate::matrix_kernels::{
    assemble_block_kernel, build_operator_matrices, build_s1, build_s4, widom_decompose, Beta,
    MatrixKernel, OperatorMatrices,
};
use crate::orthopoly::{
    build_system, check_bulk_interval, default_top, project_kernel, required_nodes,
    WeightedPolySystem,
};
use crate::potential::{
    check_genericity, effective_potential, equilibrium_density, solve_one_cut_support,
    GenericityReport, PolynomialPotential, NORMALIZATION_TOL,
};
use crate::sampler::{
    count_in_interval, empirical_char_functional, mcmc_sample, normality_test, CountStatistics,
    SamplerSettings, TridiagonalSampler,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// Tridiagonal model for `V = λ²/2`, Metropolis otherwise.
    #[default]
    Auto,
    Metropolis,
    Tridiagonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Exact finite-n identities (reductions, `εD = S^T`, reproducing, traces).
    pub identity: f64,
    pub antisymmetry: f64,
    pub spectrum: f64,
    pub orthonormality: f64,
    /// `v` constant on the support.
    pub equilibrium: f64,
    /// Allowed determinant/Monte Carlo gap in standard errors.
    pub mc_sigmas: f64,
    pub ks_p_value: f64,
    /// Window for the variance slope, in units of `π^{-2}`.
    pub slope_window: [f64; 2],
    /// Window for `Var_1 / Var_2` and `Var_2 / Var_4`.
    pub ratio_window: [f64; 2],
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-6,
            antisymmetry: 1e-8,
            spectrum: 1e-8,
            orthonormality: 1e-8,
            equilibrium: 1e-6,
            mc_sigmas: 3.0,
            ks_p_value: 0.01,
            slope_window: [0.8, 1.2],
            ratio_window: [1.5, 2.5],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOverrides {
    /// Nyström nodes on `Δ` for `K_n[Δ]`.
    pub kernel_nodes: Option<usize>,
    /// Nodes on `Δ` for the β = 1, 4 block and reduced operators.
    pub block_nodes: Option<usize>,
    /// Highest recurrence index.
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PolynomialPotential,
    pub betas: Vec<Beta>,
    pub n_values: Vec<usize>,
    /// `Δ`; `null` means the whole support (variance scan only).
    pub interval: Option<[f64; 2]>,
    pub x_grid: Vec<f64>,
    pub sampler: SamplerSettings,
    pub sampler_kind: SamplerKind,
    /// Largest `n` for which β = 1, 4 determinants are computed in `clt`.
    pub max_block_n: usize,
    pub quadrature: QuadratureOverrides,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
    pub dump_matrices: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: PolynomialPotential::gaussian(),
            betas: vec![Beta::Two],
            n_values: vec![50, 100, 200, 400],
            interval: Some([-1.0, 1.0]),
            x_grid: vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
            sampler: SamplerSettings::default(),
            sampler_kind: SamplerKind::Auto,
            max_block_n: 16,
            quadrature: QuadratureOverrides::default(),
            tolerances: Tolerances::default(),
            output_dir: None,
            dump_matrices: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn system(&self, n: usize) -> Result<WeightedPolySystem> {
        let top = self
            .quadrature
            .top
            .unwrap_or_else(|| default_top(&self.potential, n));
        build_system(&self.potential, n, top)
    }

    fn bulk_interval(&self, system: &WeightedPolySystem) -> Result<(f64, f64)> {
        let [a, b] = self
            .interval
            .ok_or_else(|| Error::Config("this experiment needs an interval".into()))?;
        check_bulk_interval(system.measure(), a, b)?;
        Ok((a, b))
    }

    fn uses_tridiagonal(&self) -> bool {
        match self.sampler_kind {
            SamplerKind::Tridiagonal => true,
            SamplerKind::Metropolis => false,
            SamplerKind::Auto => is_gaussian(&self.potential),
        }
    }
}

fn is_gaussian(v: &PolynomialPotential) -> bool {
    let c = v.coeffs();
    v.degree() == 2 && c[1] == 0.0 && c[2] == 0.5
}

/// Stream seed for one `(β, n)` work item.
pub fn derive_seed(master: u64, beta: Beta, n: usize) -> u64 {
    let mut z = master ^ ((beta.value() as u64) << 40) ^ (n as u64);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Limiting value of `log Φ(x)`.
pub fn limit_value(beta: Beta, x: f64) -> f64 {
    match beta {
        Beta::One => x * x,
        Beta::Two => 0.5 * x * x,
        Beta::Four => 0.25 * x * x,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    #[serde(default)]
    pub detail: String,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: String::new(),
        }
    }

    pub fn within(name: impl Into<String>, value: f64, window: [f64; 2]) -> Self {
        Self {
            name: name.into(),
            passed: (window[0]..=window[1]).contains(&value),
            value,
            tolerance: window[1],
            detail: format!("window [{}, {}]", window[0], window[1]),
        }
    }

    pub fn failed(name: impl Into<String>, err: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            tolerance: f64::NAN,
            detail: err.to_string(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// One value of `log Φ` with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    #[serde(flatten)]
    pub result: CharFunctionalResult,
    pub interval: [f64; 2],
    /// Particle number the value refers to (`n / 2` for β = 4 kernels).
    pub particles: f64,
    pub limit: f64,
    /// Agreement tolerance used when comparing this record.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub log_n: f64,
    pub trace: f64,
    pub mean_count: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

impl LineFit {
    pub fn fit(pts: &[(f64, f64)]) -> Self {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residuals = pts.iter().map(|p| p.1 - intercept - slope * p.0).collect();
        Self {
            slope,
            intercept,
            residuals,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub endpoints: Vec<f64>,
    pub density_at_center: f64,
    pub mass: f64,
    pub level: f64,
    pub support_deviation: f64,
    pub off_support_excess: f64,
    pub genericity: GenericityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountSummary {
    pub beta: Beta,
    pub n: usize,
    pub sampler: String,
    pub seed: u64,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error_mean: f64,
    pub tau: f64,
    pub effective_samples: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub acceptance: Vec<f64>,
    pub acceptance_flagged: bool,
    /// `n ∫_Δ ρ`.
    pub equilibrium_mean: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub equilibrium: Option<EquilibriumSummary>,
    pub records: Vec<Record>,
    pub variance: Vec<VarianceRow>,
    pub fit: Option<LineFit>,
    pub counts: Vec<CountSummary>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ExperimentReport {
    fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.into(),
            config: config.clone(),
            ..Default::default()
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.checks.iter().all(|c| c.passed);
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `summary.json` into `dir`.
    pub fn write_summary(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("summary.json");
        fs::write(&path, self.to_json()? + "\n")?;
        Ok(path)
    }
}

/// Several reports side by side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergedReport {
    pub reports: Vec<ExperimentReport>,
    pub failed_checks: Vec<String>,
    pub passed: bool,
}

pub fn merge_reports(reports: Vec<ExperimentReport>) -> MergedReport {
    let failed_checks = reports
        .iter()
        .flat_map(|r| {
            r.checks
                .iter()
                .filter(|c| !c.passed)
                .map(move |c| format!("{}: {}", r.experiment, c.name))
        })
        .collect();
    let passed = reports.iter().all(|r| r.passed);
    MergedReport {
        reports,
        failed_checks,
        passed,
    }
}

fn out_file(config: &ExperimentConfig, name: &str) -> Result<Option<csv::Writer<fs::File>>> {
    match &config.output_dir {
        None => Ok(None),
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Some(csv::Writer::from_path(dir.join(name))?))
        }
    }
}

fn write_matrix(config: &ExperimentConfig, name: &str, m: &DMatrix<f64>) -> Result<()> {
    if let Some(mut w) = out_file(config, name)? {
        for i in 0..m.nrows() {
            w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

/// `i, j, t_i, t_j, K_n(t_i, t_j)` over a node set.
fn write_kernel(config: &ExperimentConfig, name: &str, sys: &WeightedPolySystem, t: &[f64]) -> Result<()> {
    if let Some(mut w) = out_file(config, name)? {
        w.write_record(["i", "j", "t_i", "t_j", "K"])?;
        for (i, &x) in t.iter().enumerate() {
            for (j, &y) in t.iter().enumerate() {
                w.serialize((i, j, x, y, sys.kernel(x, y)))?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

/// Support, density and effective potential; writes `equilibrium.csv`
/// with columns `lambda,rho,v`.
pub fn run_equilibrium(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let tol = &config.tolerances;
    let v = &config.potential;
    let support = solve_one_cut_support(v)?;
    let measure = equilibrium_density(v, &support)?;
    let eff = effective_potential(&measure, f64::INFINITY)?;
    let genericity = check_genericity(&measure);
    let mut report = ExperimentReport::new("equilibrium", config);

    report.checks.push(Check::at_most(
        "normalization",
        (measure.mass() - 1.0).abs(),
        NORMALIZATION_TOL,
    ));
    report.checks.push(Check::at_most(
        "v-constant-on-support",
        eff.support_deviation,
        tol.equilibrium,
    ));
    report.checks.push(
        Check {
            name: "v-smaller-off-support".into(),
            passed: eff.off_support_excess < 0.0,
            value: eff.off_support_excess,
            tolerance: 0.0,
            detail: String::new(),
        }
        .with_detail("max of v - level outside the support"),
    );
    let worst_exponent = genericity
        .edge_exponents
        .iter()
        .map(|e| (e - 0.5).abs())
        .fold(0.0, f64::max);
    report
        .checks
        .push(Check::at_most("square-root-edges", worst_exponent, 0.05));

    if let Some(mut w) = out_file(config, "equilibrium.csv")? {
        w.write_record(["lambda", "rho", "v"])?;
        let diam = support.diameter();
        let (lo, hi) = (support.lower() - 0.25 * diam, support.upper() + 0.25 * diam);
        for k in 0..=400 {
            let x = lo + (hi - lo) * k as f64 / 400.0;
            w.serialize((x, measure.density(x), eff.eval(x)))?;
        }
        w.flush()?;
    }

    let center = 0.5 * (support.lower() + support.upper());
    report.equilibrium = Some(EquilibriumSummary {
        endpoints: support.endpoints().to_vec(),
        density_at_center: measure.density(center),
        mass: measure.mass(),
        level: eff.level(),
        support_deviation: eff.support_deviation,
        off_support_excess: eff.off_support_excess,
        genericity,
    });
    Ok(report.finish())
}

/// `Tr K_n[Δ](1 - K_n[Δ])` over `n_values` with a least-squares fit against
/// `log n`; writes `variance.csv`.
pub fn run_variance_scan(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut ns = config.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 4 {
        return Err(Error::Config(format!(
            "variance scan needs at least 4 distinct n values, got {}",
            ns.len()
        )));
    }
    let rows: Vec<VarianceRow> = ns
        .par_iter()
        .map(|&n| {
            let sys = config.system(n)?;
            let kernel = match config.interval {
                None => sys.full_support_kernel(),
                Some(_) => {
                    let (a, b) = config.bulk_interval(&sys)?;
                    let nq = config
                        .quadrature
                        .kernel_nodes
                        .unwrap_or_else(|| required_nodes(&sys, a, b));
                    project_kernel(&sys, a, b, nq)?
                }
            };
            Ok(VarianceRow {
                n,
                log_n: (n as f64).ln(),
                trace: variance_trace(&kernel)?,
                mean_count: kernel.trace(),
            })
        })
        .collect::<Result<_>>()?;
    let fit = LineFit::fit(&rows.iter().map(|r| (r.log_n, r.trace)).collect::<Vec<_>>());
    let mut report = ExperimentReport::new("variance-scan", config);
    let pi2 = std::f64::consts::PI.powi(2);
    if config.interval.is_some() {
        report.checks.push(Check::within(
            "variance-slope",
            fit.slope * pi2,
            config.tolerances.slope_window,
        ).with_detail("fitted slope times pi^2"));
        let increasing = rows.windows(2).all(|w| w[1].trace > w[0].trace);
        report.checks.push(Check {
            name: "variance-increasing".into(),
            passed: increasing,
            value: rows.last().unwrap().trace - rows[0].trace,
            tolerance: 0.0,
            detail: String::new(),
        });
    } else {
        let worst = rows.iter().map(|r| r.trace.abs()).fold(0.0, f64::max);
        report
            .checks
            .push(Check::at_most("variance-vanishes", worst, config.tolerances.identity));
    }
    if let Some(mut w) = out_file(config, "variance.csv")? {
        w.write_record(["n", "log_n", "trace", "fit", "residual"])?;
        for (r, res) in rows.iter().zip(&fit.residuals) {
            w.serialize((r.n, r.log_n, r.trace, r.trace - res, res))?;
        }
        w.flush()?;
    }
    report.variance = rows;
    report.fit = Some(fit);
    Ok(report.finish())
}

/// Counts in `[a, b]` with their summary.
struct CountRun {
    counts: Vec<u32>,
    /// `(chain, sweep)` for each count.
    index: Vec<(usize, usize)>,
    summary: CountSummary,
}

fn draw_counts(config: &ExperimentConfig, beta: Beta, n: usize, a: f64, b: f64) -> Result<CountRun> {
    let seed = derive_seed(config.sampler.seed, beta, n);
    let total = config.sampler.samples * config.sampler.chains;
    let (counts, index, acceptance, flagged, name) = if config.uses_tridiagonal() {
        let counts = TridiagonalSampler::new(beta.value(), n)?.counts(a, b, total, seed);
        let index = (0..total).map(|k| (0, k)).collect();
        (counts, index, Vec::new(), false, "tridiagonal")
    } else {
        let settings = SamplerSettings {
            seed,
            ..config.sampler
        };
        let run = mcmc_sample(&config.potential, beta, n, &settings)?;
        let counts = run
            .samples
            .iter()
            .map(|s| count_in_interval(&s.eigenvalues, a, b) as u32)
            .collect();
        let index = run.samples.iter().map(|s| (s.chain, s.sweep)).collect();
        (counts, index, run.acceptance, run.acceptance_flagged, "metropolis")
    };
    let stats = CountStatistics::new(counts.clone())?;
    let ks = normality_test(&counts)?;
    let support = solve_one_cut_support(&config.potential)?;
    let measure = equilibrium_density(&config.potential, &support)?;
    Ok(CountRun {
        summary: CountSummary {
            beta,
            n,
            sampler: name.into(),
            seed,
            samples: counts.len(),
            mean: stats.mean,
            variance: stats.variance,
            std_error_mean: stats.std_error_mean,
            tau: stats.tau,
            effective_samples: stats.effective_samples,
            ks_statistic: ks.statistic,
            ks_p_value: ks.p_value,
            acceptance,
            acceptance_flagged: flagged,
            equilibrium_mean: n as f64 * measure.mass_in(a, b),
        },
        counts,
        index,
    })
}

fn write_counts(config: &ExperimentConfig, run: &CountRun) -> Result<()> {
    let s = &run.summary;
    if let Some(mut w) = out_file(config, &format!("counts_beta{}_n{}.csv", s.beta, s.n))? {
        w.write_record(["seed", "chain", "sweep", "count"])?;
        for (c, (chain, sweep)) in run.counts.iter().zip(&run.index) {
            w.serialize((s.seed, chain, sweep, c))?;
        }
        w.flush()?;
    }
    Ok(())
}

struct PairOutcome {
    records: Vec<Record>,
    checks: Vec<Check>,
    counts: CountRun,
}

fn record(result: CharFunctionalResult, interval: [f64; 2], particles: f64, tolerance: f64) -> Record {
    let limit = limit_value(result.beta, result.x);
    Record {
        result,
        interval,
        particles,
        limit,
        tolerance,
    }
}

fn clt_pair(config: &ExperimentConfig, beta: Beta, n: usize) -> Result<PairOutcome> {
    let tol = &config.tolerances;
    if beta == Beta::One && n % 2 == 1 {
        return Err(Error::Config(format!("beta = 1 needs even n, got {n}")));
    }
    let sys = config.system(n)?;
    let (a, b) = config.bulk_interval(&sys)?;
    let iv = [a, b];
    let mut records = Vec::new();
    let mut checks = Vec::new();
    let tag = format!("beta{beta}-n{n}");

    let mut exact: Vec<(f64, f64)> = Vec::new();
    if beta == Beta::Two {
        let nq = config
            .quadrature
            .kernel_nodes
            .unwrap_or_else(|| required_nodes(&sys, a, b));
        let det = Beta2Determinant::new(&project_kernel(&sys, a, b, nq)?, n);
        for &x in &config.x_grid {
            let r = det.eval(x)?;
            exact.push((x, r.log_phi));
            records.push(record(r, iv, n as f64, tol.identity));
        }
    } else if n <= config.max_block_n {
        let ops = build_operator_matrices(&sys)?;
        let kernel = match beta {
            Beta::One => build_s1(&ops)?,
            _ => build_s4(&ops)?,
        };
        let nq = config
            .quadrature
            .block_nodes
            .unwrap_or_else(|| required_nodes(&sys, a, b).max(48));
        let block = BlockDeterminant::new(&assemble_block_kernel(&kernel, a, b, nq)?, n)?;
        let reduced = ScalarReduction::new(&kernel, a, b, nq)?;
        let gram = GramFunctional::new(&ops, beta, a, b, nq)?;
        let particles = kernel.particles();
        let mut worst: f64 = 0.0;
        let mut worst_imag: f64 = 0.0;
        for &x in &config.x_grid {
            let p = block.eval(x)?;
            let q = reduced.eval(x)?;
            let g = gram.eval(x)?;
            worst = worst
                .max((p.log_phi - q.log_phi).abs())
                .max((p.log_phi - g.log_phi).abs());
            worst_imag = worst_imag.max(p.imag_part.abs());
            for r in [p, q, g] {
                records.push(record(r, iv, particles, tol.identity));
            }
        }
        checks.push(Check::at_most(format!("{tag}-block-vs-reduced"), worst, tol.identity));
        checks.push(Check::at_most(format!("{tag}-branch-imaginary"), worst_imag, IMAG_TOL));
    }

    let counts = draw_counts(config, beta, n, a, b)?;
    let stats = CountStatistics::new(counts.counts.clone())?;
    for &x in &config.x_grid {
        let r = empirical_char_functional(&stats, x, n, beta)?;
        let se = r.std_error.unwrap_or(0.0);
        if let Some(&(_, det)) = exact.iter().find(|e| e.0 == x) {
            let gap = (r.log_phi - det).abs();
            checks.push(
                Check::at_most(format!("{tag}-x{x}-determinant-vs-mc"), gap, tol.mc_sigmas * se)
                    .with_detail(format!("determinant {det}, mc {} ± {se}", r.log_phi)),
            );
        }
        records.push(record(r, iv, n as f64, tol.mc_sigmas * se));
    }
    checks.push(
        Check {
            name: format!("{tag}-normality"),
            passed: counts.summary.ks_p_value > tol.ks_p_value,
            value: counts.summary.ks_p_value,
            tolerance: tol.ks_p_value,
            detail: String::new(),
        }
        .with_detail("Kolmogorov-Smirnov p-value, must exceed tolerance"),
    );
    if counts.summary.acceptance_flagged {
        checks.push(Check {
            name: format!("{tag}-acceptance"),
            passed: false,
            value: counts.summary.acceptance.iter().cloned().fold(f64::NAN, f64::min),
            tolerance: 0.1,
            detail: "acceptance rate outside [0.1, 0.9]".into(),
        });
    }
    Ok(PairOutcome {
        records,
        checks,
        counts,
    })
}

/// Determinant and Monte Carlo values of `log Φ` for every `(β, n, x)`,
/// normality of the counts and the cross-β variance ratios; writes
/// `clt.csv` and one counts table per `(β, n)`.
pub fn run_clt(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let pairs: Vec<(Beta, usize)> = config
        .betas
        .iter()
        .flat_map(|&b| config.n_values.iter().map(move |&n| (b, n)))
        .collect();
    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .map(|&(beta, n)| clt_pair(config, beta, n))
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport::new("clt", config);
    for o in &outcomes {
        write_counts(config, &o.counts)?;
    }
    for o in outcomes {
        report.records.extend(o.records);
        report.checks.extend(o.checks);
        report.counts.push(o.counts.summary);
    }
    let tol = &config.tolerances;
    for &n in &config.n_values {
        let var = |b: Beta| {
            report
                .counts
                .iter()
                .find(|c| c.beta == b && c.n == n)
                .map(|c| c.variance)
        };
        if let (Some(v1), Some(v2)) = (var(Beta::One), var(Beta::Two)) {
            report
                .checks
                .push(Check::within(format!("n{n}-variance-ratio-1-2"), v1 / v2, tol.ratio_window));
        }
        if let (Some(v2), Some(v4)) = (var(Beta::Two), var(Beta::Four)) {
            report
                .checks
                .push(Check::within(format!("n{n}-variance-ratio-2-4"), v2 / v4, tol.ratio_window));
        }
        let mc = |b: Beta, x: f64| {
            report
                .records
                .iter()
                .find(|r| r.result.method == Method::Mc && r.result.beta == b && r.result.n == n && r.result.x == x)
                .map(|r| r.result.log_phi)
        };
        for &x in config.x_grid.iter().filter(|&&x| x != 0.0) {
            if let (Some(l1), Some(l4)) = (mc(Beta::One, x), mc(Beta::Four, x)) {
                report.checks.push(Check {
                    name: format!("n{n}-x{x}-beta1-above-beta4"),
                    passed: l1 > l4,
                    value: l1 - l4,
                    tolerance: 0.0,
                    detail: String::new(),
                });
            }
        }
    }
    if let Some(mut w) = out_file(config, "clt.csv")? {
        w.write_record([
            "x", "x_n", "logPhi", "EN", "method", "n", "beta", "interval", "se", "limit",
        ])?;
        for r in &report.records {
            let c = &r.result;
            w.write_record([
                c.x.to_string(),
                c.x_n.to_string(),
                c.log_phi.to_string(),
                c.mean_count.to_string(),
                c.method.to_string(),
                c.n.to_string(),
                c.beta.to_string(),
                format!("[{},{}]", r.interval[0], r.interval[1]),
                c.std_error.map(|s| s.to_string()).unwrap_or_default(),
                r.limit.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(report.finish())
}

/// Largest `n` accepted by [`run_verify_identities`].
pub const MAX_IDENTITY_N: usize = 64;

fn sample_points(sys: &WeightedPolySystem, k: usize) -> Vec<f64> {
    let s = sys.measure().support();
    (0..k)
        .map(|i| s.lower() + s.diameter() * (i as f64 + 0.5) / k as f64)
        .collect()
}

fn perturbed_kernel<'a>(ops: &'a OperatorMatrices, beta: Beta) -> Result<MatrixKernel<'a>> {
    let base = match beta {
        Beta::One => ops.m_n(),
        _ => ops.d_n(),
    };
    let shift = 0.01 * base.amax();
    let perturbed = &base + DMatrix::identity(base.nrows(), base.ncols()) * shift;
    let inv = perturbed
        .try_inverse()
        .ok_or_else(|| Error::Singular("perturbed matrix".into()))?;
    let coef = if beta == Beta::One { inv } else { -inv };
    Ok(MatrixKernel::with_coefficients(beta, ops, coef))
}

fn identities_for(config: &ExperimentConfig, n: usize) -> Result<Vec<Check>> {
    let tol = &config.tolerances;
    let mut checks = Vec::new();
    let tag = format!("n{n}");
    let sys = config.system(n)?;
    checks.push(Check::at_most(
        format!("{tag}-orthonormality"),
        sys.orthonormality_residual(),
        tol.orthonormality,
    ));
    let pts = sample_points(&sys, 5);
    let pairs: Vec<(f64, f64)> = pts.iter().flat_map(|&x| pts.iter().map(move |&y| (x, y))).collect();
    checks.push(Check::at_most(
        format!("{tag}-reproducing"),
        sys.reproducing_residual(&pairs),
        tol.identity,
    ));
    checks.push(Check::at_most(
        format!("{tag}-kernel-trace"),
        (sys.kernel_trace() - n as f64).abs(),
        tol.identity,
    ));
    let (a, b) = config.bulk_interval(&sys)?;
    let nq = config
        .quadrature
        .kernel_nodes
        .unwrap_or_else(|| required_nodes(&sys, a, b).max(48));
    match project_kernel(&sys, a, b, nq) {
        Ok(k) => {
            if config.dump_matrices {
                write_kernel(config, &format!("kernel_n{n}.csv"), &sys, k.nodes())?;
            }
            let ev = k.eigenvalues();
            let below = -ev.first().cloned().unwrap_or(0.0);
            let above = ev.last().cloned().unwrap_or(0.0) - 1.0;
            checks.push(Check::at_most(
                format!("{tag}-projection-spectrum"),
                below.max(above).max(0.0),
                tol.spectrum,
            ));
        }
        Err(e) => checks.push(Check::failed(format!("{tag}-projection-spectrum"), &e)),
    }

    let ops = build_operator_matrices(&sys)?;
    let (d_res, m_res) = ops.antisymmetry();
    checks.push(Check::at_most(format!("{tag}-d-antisymmetry"), d_res, tol.antisymmetry));
    checks.push(Check::at_most(format!("{tag}-m-antisymmetry"), m_res, tol.antisymmetry));
    if config.dump_matrices {
        write_matrix(config, &format!("d_n{n}.csv"), &ops.d_n())?;
        write_matrix(config, &format!("m_n{n}.csv"), &ops.m_n())?;
        write_matrix(config, &format!("t_n{n}.csv"), &ops.t_block())?;
        if let Some(mut w) = out_file(config, &format!("recurrence_n{n}.csv"))? {
            w.write_record(["l", "a", "b"])?;
            for row in sys.coefficient_rows() {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    if n % 2 == 1 {
        return Ok(checks);
    }
    let ys = sample_points(&sys, 7);
    let bnq = config
        .quadrature
        .block_nodes
        .unwrap_or_else(|| required_nodes(&sys, a, b).max(48));
    for beta in [Beta::One, Beta::Four] {
        let tag = format!("{tag}-beta{beta}");
        let kernel = match beta {
            Beta::One => build_s1(&ops)?,
            _ => build_s4(&ops)?,
        };
        checks.push(Check::at_most(
            format!("{tag}-epsilon-d"),
            kernel.epsilon_d_residual(&ys),
            tol.identity,
        ));
        checks.push(Check::at_most(
            format!("{tag}-trace"),
            (kernel.trace() - n as f64).abs(),
            tol.identity,
        ));
        let control = perturbed_kernel(&ops, beta)?.epsilon_d_residual(&ys);
        checks.push(Check {
            name: format!("{tag}-negative-control"),
            passed: control > tol.identity,
            value: control,
            tolerance: tol.identity,
            detail: "epsilon-d residual with a perturbed Gram matrix, must exceed tolerance".into(),
        });
        if beta == Beta::One {
            match widom_decompose(&kernel) {
                Ok(w) => {
                    checks.push(
                        Check::at_most(format!("{tag}-widom"), w.relative_residual, tol.identity)
                            .with_detail(format!("max |F| = {}", w.max_abs_f)),
                    );
                    if config.dump_matrices {
                        write_matrix(config, &format!("widom_f_n{n}.csv"), &w.f)?;
                    }
                }
                Err(e) => checks.push(Check::failed(format!("{tag}-widom"), &e)),
            }
        }
        let block = BlockDeterminant::new(&assemble_block_kernel(&kernel, a, b, bnq)?, n)?;
        let reduced = ScalarReduction::new(&kernel, a, b, bnq)?;
        let mut worst: f64 = 0.0;
        for &x in &config.x_grid {
            let p = block.eval(x)?;
            let q = reduced.eval(x)?;
            worst = worst.max((p.log_phi - q.log_phi).abs());
        }
        checks.push(Check::at_most(format!("{tag}-reduction"), worst, tol.identity));
    }
    Ok(checks)
}

/// Exact finite-n identities with their residuals, for `n <= 64`.
pub fn run_verify_identities(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if let Some(&n) = config.n_values.iter().find(|&&n| n > MAX_IDENTITY_N || n < 2) {
        return Err(Error::Config(format!(
            "verify-identities needs 2 <= n <= {MAX_IDENTITY_N}, got {n}"
        )));
    }
    let per_n: Vec<Vec<Check>> = config
        .n_values
        .par_iter()
        .map(|&n| identities_for(config, n))
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport::new("verify-identities", config);
    report.checks = per_n.into_iter().flatten().collect();
    if let Some(mut w) = out_file(config, "identities.csv")? {
        w.write_record(["name", "residual", "tolerance", "passed"])?;
        for c in &report.checks {
            w.serialize((&c.name, c.value, c.tolerance, c.passed))?;
        }
        w.flush()?;
    }
    Ok(report.finish())
}

/// Draws samples for every `(β, n)`; writes `samples_beta*_n*.csv`
/// (`seed, chain, sweep, eigenvalues...`) and the matching counts tables.
pub fn run_sample(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let [a, b] = config
        .interval
        .ok_or_else(|| Error::Config("sampling needs an interval".into()))?;
    let mut report = ExperimentReport::new("sample", config);
    for &beta in &config.betas {
        for &n in &config.n_values {
            let seed = derive_seed(config.sampler.seed, beta, n);
            let samples = if config.uses_tridiagonal() {
                TridiagonalSampler::new(beta.value(), n)?
                    .samples(config.sampler.samples * config.sampler.chains, seed)
            } else {
                let settings = SamplerSettings {
                    seed,
                    ..config.sampler
                };
                mcmc_sample(&config.potential, beta, n, &settings)?.samples
            };
            if let Some(mut w) = out_file(config, &format!("samples_beta{beta}_n{n}.csv"))? {
                for s in &samples {
                    let mut row = vec![s.seed.to_string(), s.chain.to_string(), s.sweep.to_string()];
                    row.extend(s.eigenvalues.iter().map(|v| v.to_string()));
                    w.write_record(&row)?;
                }
                w.flush()?;
            }
            let run = draw_counts(config, beta, n, a, b)?;
            write_counts(config, &run)?;
            let s = &run.summary;
            if beta == Beta::Two {
                let gap = (s.mean - s.equilibrium_mean).abs();
                report.checks.push(Check::at_most(
                    format!("beta{beta}-n{n}-mean-count"),
                    gap,
                    config.tolerances.mc_sigmas * s.std_error_mean,
                ));
            }
            report.checks.push(Check {
                name: format!("beta{beta}-n{n}-acceptance"),
                passed: !s.acceptance_flagged,
                value: s.acceptance.iter().cloned().fold(f64::NAN, f64::min),
                tolerance: 0.1,
                detail: String::new(),
            });
            report.counts.push(run.summary);
        }
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_round_trip() {
        let c = ExperimentConfig::from_json(r#"{"potential": {"coeffs": [0, 0, -1, 0, 1]}, "betas": [1, 4]}"#).unwrap();
        assert_eq!(c.betas, vec![Beta::One, Beta::Four]);
        assert_eq!(c.x_grid.len(), 6);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.potential, c.potential);
        assert!(ExperimentConfig::from_json(r#"{"potential": {"coeffs": [0, 1]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn seeds_differ_across_work_items() {
        let s = derive_seed(1, Beta::Two, 100);
        assert_ne!(s, derive_seed(1, Beta::Two, 101));
        assert_ne!(s, derive_seed(1, Beta::Four, 100));
        assert_ne!(s, derive_seed(2, Beta::Two, 100));
    }

    #[test]
    fn line_fit_recovers_line() {
        let f = LineFit::fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
    }
}
