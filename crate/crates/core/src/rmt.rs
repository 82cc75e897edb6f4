//! Monte-Carlo validators for the random-matrix facts the initialization
//! analysis relies on.
//!
//! Each validator draws sample `i` from `rng.substream(i)` so results do not
//! depend on evaluation order, and returns a [`StatTest`] carrying the
//! statistic, its threshold and the verdict. Histogram-based tests also
//! return [`HistRow`]s with empirical and analytic densities normalized to
//! unit mass over `(−π, π]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{product, LayerStack};
use crate::ensembles::{cre_density_det1, cue_density, eigenangles, gaussian_matrix, haar_unitary, main_term_seed_stat};
use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::rng::SeededRng;

/// Two-sided KS coefficient `c(α)` at `α = 0.001`.
pub const KS_C_001: f64 = 1.949;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    /// Pass iff `statistic < threshold`.
    Below,
    /// Pass iff `statistic ≥ threshold`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatTest {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl StatTest {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::Below => statistic < threshold,
            Comparison::AtLeast => statistic >= threshold,
        };
        Self {
            name: name.into(),
            statistic,
            threshold,
            comparison,
            pass,
        }
    }

    pub fn rule(&self) -> &'static str {
        match self.comparison {
            Comparison::Below => "<",
            Comparison::AtLeast => ">=",
        }
    }
}

/// One histogram bin; densities integrate to 1 over all bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub empirical: f64,
    pub analytic: f64,
}

/// Counts of `samples` in `bins` equal bins over `(−π, π]`.
pub fn angle_histogram(samples: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    let width = 2.0 * PI / bins as f64;
    for &t in samples {
        let k = ((t + PI) / width).floor();
        let k = (k.max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
}

fn bin_edges(bins: usize, k: usize) -> (f64, f64) {
    let width = 2.0 * PI / bins as f64;
    (-PI + k as f64 * width, -PI + (k + 1) as f64 * width)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn hist_rows(counts: &[usize], analytic_mass: &[f64]) -> Vec<HistRow> {
    let bins = counts.len();
    let total: usize = counts.iter().sum();
    let mass: f64 = analytic_mass.iter().sum();
    let width = 2.0 * PI / bins as f64;
    (0..bins)
        .map(|k| {
            let (bin_lo, bin_hi) = bin_edges(bins, k);
            HistRow {
                bin_lo,
                bin_hi,
                empirical: counts[k] as f64 / (total.max(1) as f64 * width),
                analytic: analytic_mass[k] / (mass * width),
            }
        })
        .collect()
}

/// L1 distance between the two normalized densities of `rows`.
pub fn l1_distance(rows: &[HistRow]) -> f64 {
    rows.iter()
        .map(|r| (r.empirical - r.analytic).abs() * (r.bin_hi - r.bin_lo))
        .sum()
}

/// Pooled CUE eigenangles against the flat density: Pearson χ² with
/// `bins − 1` degrees of freedom at `p = 0.001`.
pub fn cue_uniformity(d: usize, n_samples: usize, bins: usize, rng: &SeededRng) -> Result<(StatTest, Vec<HistRow>)> {
    let mut angles = Vec::with_capacity(d * n_samples);
    for i in 0..n_samples {
        let q = haar_unitary::<Complex64>(d, &mut rng.substream(i as u64));
        angles.extend(eigenangles(&q)?);
    }
    let counts = angle_histogram(&angles, bins);
    let expected = angles.len() as f64 / bins as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let threshold = ChiSquared::new((bins - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.999);
    let width = 2.0 * PI / bins as f64;
    let mass = vec![cue_density(0.0, d) * width; bins];
    Ok((
        StatTest::new(format!("cue_chi2_d{d}"), chi2, threshold, Comparison::Below),
        hist_rows(&counts, &mass),
    ))
}

/// Largest per-bin relative deviation `|empirical/analytic − 1|`.
pub fn max_relative_deviation(rows: &[HistRow]) -> f64 {
    rows.iter()
        .map(|r| (r.empirical / r.analytic - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Real Haar matrix conditioned on `det = +1`: samples with `det = −1`
/// are mapped to `Q·diag(−1, 1, …, 1)`, which preserves Haar measure.
pub fn special_orthogonal(d: usize, rng: &mut SeededRng) -> Mat<f64> {
    let mut q = haar_unitary::<f64>(d, rng);
    if linalg::det_sign_or_phase(&q) < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Eigenangles of `det = 1` real Haar samples against the circular real
/// density. For odd `d` the angle nearest 0 (the fixed eigenvalue +1) is
/// dropped from each sample.
pub fn cre_det1_density(d: usize, n_samples: usize, bins: usize, rng: &SeededRng) -> Result<(StatTest, Vec<HistRow>)> {
    let mut angles = Vec::with_capacity(d * n_samples);
    for i in 0..n_samples {
        let q = special_orthogonal(d, &mut rng.substream(i as u64));
        let mut a = eigenangles(&q)?;
        if d % 2 == 1 {
            let nearest = a
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .map(|(k, _)| k)
                .expect("d ≥ 1");
            a.swap_remove(nearest);
        }
        angles.extend(a);
    }
    let counts = angle_histogram(&angles, bins);
    let mass: Vec<f64> = (0..bins)
        .map(|k| {
            let (lo, hi) = bin_edges(bins, k);
            simpson(|t| cre_density_det1(t, d), lo, hi, 64)
        })
        .collect();
    let rows = hist_rows(&counts, &mass);
    Ok((
        StatTest::new(format!("cre_det1_l1_d{d}"), l1_distance(&rows), 0.05, Comparison::Below),
        rows,
    ))
}

/// `|fraction(det(W_N⋯W_1) > 0) − ½|` over products of i.i.d. real
/// Gaussian layers; passes within `0.015`.
pub fn det_sign_balance(d: usize, n_layers: usize, n_products: usize, rng: &SeededRng) -> Result<StatTest> {
    let mut positive = 0usize;
    for i in 0..n_products {
        let mut r = rng.substream(i as u64);
        let layers: Vec<Mat<f64>> = (0..n_layers).map(|_| gaussian_matrix(d, &mut r)).collect();
        let w = product(&LayerStack::new(layers)?);
        if linalg::det_sign_or_phase(&w) > 0.0 {
            positive += 1;
        }
    }
    let fraction = positive as f64 / n_products as f64;
    Ok(StatTest::new(
        format!("det_sign_offset_d{d}_n{n_layers}"),
        (fraction - 0.5).abs(),
        0.015,
        Comparison::Below,
    ))
}

/// Empirical `Pr(σ_min(I+Q) ≥ πδ/d)` over CUE samples, required to be at
/// least `1 − δ − 0.02`.
pub fn haar_quantile(d: usize, n_samples: usize, delta: f64, rng: &SeededRng) -> Result<StatTest> {
    let cut = PI * delta / d as f64;
    let id = Mat::<Complex64>::identity(d, d);
    let mut hits = 0usize;
    for i in 0..n_samples {
        let q = haar_unitary::<Complex64>(d, &mut rng.substream(i as u64));
        if linalg::norms(&(&id + q))?.sigma_min >= cut {
            hits += 1;
        }
    }
    Ok(StatTest::new(
        format!("haar_quantile_d{d}_delta{delta}"),
        hits as f64 / n_samples as f64,
        1.0 - delta - 0.02,
        Comparison::AtLeast,
    ))
}

/// Largest `σ_min(Q + (QQᵀ)^{1/2}) = σ_min(I + Q)` over real Haar samples
/// with `det Q = −1`; passes below `1e−10`. Also returns how many samples
/// had negative determinant.
pub fn real_zero_mode(d: usize, n_samples: usize, rng: &SeededRng) -> Result<(StatTest, usize)> {
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for i in 0..n_samples {
        let q = haar_unitary::<f64>(d, &mut rng.substream(i as u64));
        if linalg::det_sign_or_phase(&q) < 0.0 {
            count += 1;
            worst = worst.max(main_term_seed_stat(&q)?);
        }
    }
    Ok((
        StatTest::new(format!("real_det_minus_zero_mode_d{d}"), worst, 1e-10, Comparison::Below),
        count,
    ))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `Re tr(U₀Q)` versus `Re tr(Q')` for independent CUE samples `Q, Q'` and
/// a fixed Haar `U₀`; KS statistic against the `α = 0.001` critical value.
pub fn left_invariance(d: usize, n_samples: usize, rng: &SeededRng) -> Result<StatTest> {
    let u0 = haar_unitary::<Complex64>(d, &mut rng.substream(0));
    let shifted_rng = rng.substream(1);
    let plain_rng = rng.substream(2);
    let shifted: Vec<f64> = (0..n_samples)
        .map(|i| (&u0 * haar_unitary::<Complex64>(d, &mut shifted_rng.substream(i as u64))).trace().re)
        .collect();
    let plain: Vec<f64> = (0..n_samples)
        .map(|i| haar_unitary::<Complex64>(d, &mut plain_rng.substream(i as u64)).trace().re)
        .collect();
    let n = n_samples as f64;
    Ok(StatTest::new(
        format!("haar_left_invariance_ks_d{d}"),
        ks_statistic(&shifted, &plain),
        KS_C_001 * (2.0 / n).sqrt(),
        Comparison::Below,
    ))
}

/// Sizes for [`run_suite`]; the default is the full validation suite.
#[derive(Clone, Debug, PartialEq)]
pub struct RmtPlan {
    pub bins: usize,
    pub cue_d: usize,
    pub cue_samples: usize,
    pub cre_d: usize,
    pub cre_samples: usize,
    pub det_d: usize,
    pub det_layers: usize,
    pub det_products: usize,
    pub quantile_d: usize,
    pub quantile_samples: usize,
    pub deltas: Vec<f64>,
    pub zero_mode_d: usize,
    pub zero_mode_samples: usize,
    pub ks_d: usize,
    pub ks_samples: usize,
}

impl Default for RmtPlan {
    fn default() -> Self {
        Self {
            bins: 20,
            cue_d: 5,
            cue_samples: 2000,
            cre_d: 6,
            cre_samples: 5000,
            det_d: 5,
            det_layers: 4,
            det_products: 10_000,
            quantile_d: 5,
            quantile_samples: 5000,
            deltas: vec![0.1, 0.3],
            zero_mode_d: 5,
            zero_mode_samples: 2000,
            ks_d: 5,
            ks_samples: 5000,
        }
    }
}

impl RmtPlan {
    /// Same tests with every dimension set to `d` (the circular-real test
    /// uses `d` as well) and every Monte-Carlo size set to `n_samples`.
    pub fn uniform(d: usize, n_samples: usize) -> Self {
        Self {
            cue_d: d,
            cue_samples: n_samples,
            cre_d: d.max(2),
            cre_samples: n_samples,
            det_d: d,
            det_products: n_samples,
            quantile_d: d,
            quantile_samples: n_samples,
            zero_mode_d: d,
            zero_mode_samples: n_samples,
            ks_d: d,
            ks_samples: n_samples,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmtReport {
    pub tests: Vec<StatTest>,
    pub cue_hist: Vec<HistRow>,
    pub cre_hist: Vec<HistRow>,
    /// Largest per-bin relative deviation of the CUE histogram (reported,
    /// not part of the verdict).
    pub cue_max_bin_deviation: f64,
}

impl RmtReport {
    pub fn all_pass(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }
}

/// Runs every validator; validator `k` uses `rng.substream(k)`.
pub fn run_suite(plan: &RmtPlan, rng: &SeededRng) -> Result<RmtReport> {
    let (cue, cue_hist) = cue_uniformity(plan.cue_d, plan.cue_samples, plan.bins, &rng.substream(0))?;
    let (cre, cre_hist) = cre_det1_density(plan.cre_d, plan.cre_samples, plan.bins, &rng.substream(1))?;
    let mut tests = vec![
        cue,
        cre,
        det_sign_balance(plan.det_d, plan.det_layers, plan.det_products, &rng.substream(2))?,
    ];
    for (k, &delta) in plan.deltas.iter().enumerate() {
        tests.push(haar_quantile(
            plan.quantile_d,
            plan.quantile_samples,
            delta,
            &rng.substream(3).substream(k as u64),
        )?);
    }
    tests.push(real_zero_mode(plan.zero_mode_d, plan.zero_mode_samples, &rng.substream(4))?.0);
    tests.push(left_invariance(plan.ks_d, plan.ks_samples, &rng.substream(5))?);
    Ok(RmtReport {
        tests,
        cue_max_bin_deviation: max_relative_deviation(&cue_hist),
        cue_hist,
        cre_hist,
    })
}
