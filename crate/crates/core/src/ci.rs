//! Conditional independence tests `x ⊥ y | z` behind one interface.
//!
//! Every test returns a statistic (the causal strength reported on graph
//! edges) and a p-value. Permutation-based tests are seeded per query; the
//! pair `(x, y)` is put in a canonical order first so swapping the arguments
//! gives the same draws.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::rng::{hash_f64s, rng_from, stable_mix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "robust_parcorr")]
    RobustParCorr,
    #[serde(rename = "parcorr_wls")]
    ParCorrWLS,
    #[serde(rename = "gpdc")]
    GPDC,
    #[serde(rename = "cmiknn")]
    CMIknn,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [
        TestKind::RobustParCorr,
        TestKind::ParCorrWLS,
        TestKind::GPDC,
        TestKind::CMIknn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::RobustParCorr => "robust_parcorr",
            TestKind::ParCorrWLS => "parcorr_wls",
            TestKind::GPDC => "gpdc",
            TestKind::CMIknn => "cmiknn",
        }
    }

    /// Statistics of these tests carry a sign.
    pub fn signed(self) -> bool {
        matches!(self, TestKind::RobustParCorr | TestKind::ParCorrWLS)
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CIConfig {
    /// Neighbour count for CMIknn; `None` picks `max(10, min(n/10, 60))`.
    pub cmi_k: Option<usize>,
    pub cmi_permutations: usize,
    /// Size of the z-space neighbourhood used by the local permutation.
    pub shuffle_neighbors: usize,
    pub gpdc_permutations: usize,
    /// Above this many samples the GP uses a subset-of-regressors approximation.
    pub gp_max_exact: usize,
    pub gp_inducing: usize,
    pub min_samples: usize,
    /// Window (rows) of the variance smoother in ParCorrWLS; `None` picks `max(11, n/20)`.
    pub variance_window: Option<usize>,
}

impl Default for CIConfig {
    fn default() -> Self {
        Self {
            cmi_k: None,
            cmi_permutations: 500,
            shuffle_neighbors: 5,
            gpdc_permutations: 200,
            gp_max_exact: 500,
            gp_inducing: 200,
            min_samples: 30,
            variance_window: None,
        }
    }
}

impl CIConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cmi_permutations == 0 || self.gpdc_permutations == 0 {
            return Err(Error::Config("permutation counts must be positive".into()));
        }
        if self.shuffle_neighbors == 0 {
            return Err(Error::Config("shuffle_neighbors must be positive".into()));
        }
        if self.cmi_k == Some(0) {
            return Err(Error::Config("cmi_k must be positive".into()));
        }
        if self.gp_inducing < 2 || self.gp_max_exact < self.gp_inducing {
            return Err(Error::Config(
                "need 2 <= gp_inducing <= gp_max_exact".into(),
            ));
        }
        if self.min_samples < 4 {
            return Err(Error::Config("min_samples must be at least 4".into()));
        }
        Ok(())
    }

    pub fn default_k(&self, n: usize) -> usize {
        self.cmi_k.unwrap_or_else(|| (n / 10).min(60).max(10))
    }
}

/// `x`, `y` and conditioning columns `z`, all of equal length and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct CIQuery {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

impl CIQuery {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<Vec<f64>>) -> Result<Self> {
        let n = x.len();
        if y.len() != n || z.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "x, y and z columns must have equal length".into(),
            ));
        }
        Ok(Self { x, y, z })
    }

    /// Builds a query keeping only rows where every column is finite.
    pub fn listwise(x: &[f64], y: &[f64], z: &[&[f64]]) -> Result<Self> {
        let n = x.len();
        if y.len() != n || z.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "x, y and z columns must have equal length".into(),
            ));
        }
        let keep: Vec<usize> = (0..n)
            .filter(|&t| x[t].is_finite() && y[t].is_finite() && z.iter().all(|c| c[t].is_finite()))
            .collect();
        let pick = |c: &[f64]| keep.iter().map(|&t| c[t]).collect::<Vec<_>>();
        Ok(Self {
            x: pick(x),
            y: pick(y),
            z: z.iter().map(|c| pick(c)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            z: self.z.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CITestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub test: TestKind,
    /// ParCorrWLS only: rows whose variance estimate was clamped to the floor.
    #[serde(default)]
    pub variance_floor_hits: usize,
}

pub const VARIANCE_FLOOR: f64 = 1e-8;

pub fn run_ci_test(kind: TestKind, q: &CIQuery, cfg: &CIConfig, seed: u64) -> Result<CITestResult> {
    match kind {
        TestKind::RobustParCorr => robust_parcorr(q, cfg),
        TestKind::ParCorrWLS => parcorr_wls(q, cfg),
        TestKind::GPDC => gpdc(q, cfg, seed),
        TestKind::CMIknn => cmi_knn(q, cfg.default_k(q.n()), cfg.cmi_permutations, cfg, seed),
    }
}

fn check_samples(q: &CIQuery, cfg: &CIConfig) -> Result<usize> {
    let n = q.n();
    if n < cfg.min_samples {
        return Err(Error::InsufficientSamples {
            got: n,
            needed: cfg.min_samples,
        });
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// partial correlation family

/// Average ranks (1-based), ties share their mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Inverse standard normal of `rank / (n + 1)`.
pub fn normal_scores(v: &[f64]) -> Vec<f64> {
    let std = Normal::standard();
    let n1 = (v.len() + 1) as f64;
    average_ranks(v)
        .into_iter()
        .map(|r| std.inverse_cdf(r / n1))
        .collect()
}

fn design(z: &[Vec<f64>], n: usize, weights: Option<&[f64]>) -> DMatrix<f64> {
    DMatrix::from_fn(n, z.len() + 1, |t, c| {
        let v = if c == 0 { 1.0 } else { z[c - 1][t] };
        weights.map_or(v, |w| v * w[t].sqrt())
    })
}

/// Least-squares residuals `y - Z b` with an intercept; with weights the fit
/// minimises `sum w (y - Z b)^2` and the returned residuals are unweighted.
fn ls_residuals(z: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = y.len();
    let a = design(z, n, weights);
    let rhs = DVector::from_iterator(n, y.iter().enumerate().map(|(t, &v)| weights.map_or(v, |w| v * w[t].sqrt())));
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.ncols()).map(|k| r[(k, k)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    if diag.iter().any(|&d| !(d > 1e-10 * max.max(1e-300))) {
        return Err(Error::DegenerateConditioning);
    }
    let mut qty = rhs;
    qr.q_tr_mul(&mut qty);
    let p = r.ncols();
    let beta = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or(Error::DegenerateConditioning)?;
    Ok((0..n)
        .map(|t| {
            let fit = beta[0] + (0..z.len()).map(|c| beta[c + 1] * z[c][t]).sum::<f64>();
            y[t] - fit
        })
        .collect())
}

/// Pearson correlation; 0 when either input has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Two-sided t-test of a (partial) correlation with `df = n - n_cond - 2`.
pub fn correlation_p_value(r: f64, n: usize, n_cond: usize) -> Result<f64> {
    if n < n_cond + 3 {
        return Err(Error::InsufficientSamples {
            got: n,
            needed: n_cond + 3,
        });
    }
    let df = (n - n_cond - 2) as f64;
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    Ok((2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

pub fn robust_parcorr(q: &CIQuery, cfg: &CIConfig) -> Result<CITestResult> {
    let n = check_samples(q, cfg)?;
    let z: Vec<Vec<f64>> = q.z.iter().map(|c| normal_scores(c)).collect();
    let rx = ls_residuals(&z, &normal_scores(&q.x), None)?;
    let ry = ls_residuals(&z, &normal_scores(&q.y), None)?;
    let r = pearson(&rx, &ry);
    Ok(CITestResult {
        statistic: r,
        p_value: correlation_p_value(r, n, z.len())?,
        n_effective: n,
        test: TestKind::RobustParCorr,
        variance_floor_hits: 0,
    })
}

/// Residual variance as a function of the first conditioning column: squared
/// OLS residuals averaged over a centred window of rows sorted by `z[0]`.
fn smoothed_variance(z0: &[f64], resid: &[f64], window: usize) -> (Vec<f64>, usize) {
    let n = z0.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z0[a].total_cmp(&z0[b]).then(a.cmp(&b)));
    let mut prefix = vec![0.0; n + 1];
    for (k, &t) in order.iter().enumerate() {
        prefix[k + 1] = prefix[k] + resid[t] * resid[t];
    }
    let half = window / 2;
    let mut var = vec![0.0; n];
    let mut hits = 0;
    for (k, &t) in order.iter().enumerate() {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(n);
        let v = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        var[t] = if v > VARIANCE_FLOOR {
            v
        } else {
            hits += 1;
            VARIANCE_FLOOR
        };
    }
    (var, hits)
}

fn wls_standardized_residuals(z: &[Vec<f64>], y: &[f64], window: usize) -> Result<(Vec<f64>, usize)> {
    if z.is_empty() {
        return Ok((ls_residuals(z, y, None)?, 0));
    }
    let ols = ls_residuals(z, y, None)?;
    let (var, hits) = smoothed_variance(&z[0], &ols, window);
    let w: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let resid = ls_residuals(z, y, Some(&w))?;
    Ok((resid.iter().zip(&w).map(|(r, w)| r * w.sqrt()).collect(), hits))
}

pub fn parcorr_wls(q: &CIQuery, cfg: &CIConfig) -> Result<CITestResult> {
    let n = check_samples(q, cfg)?;
    let window = cfg.variance_window.unwrap_or((n / 20).max(11));
    let (ex, hx) = wls_standardized_residuals(&q.z, &q.x, window)?;
    let (ey, hy) = wls_standardized_residuals(&q.z, &q.y, window)?;
    let r = pearson(&ex, &ey);
    Ok(CITestResult {
        statistic: r,
        p_value: correlation_p_value(r, n, q.z.len())?,
        n_effective: n,
        test: TestKind::ParCorrWLS,
        variance_floor_hits: hx + hy,
    })
}

// ---------------------------------------------------------------------------
// distance correlation

/// Fenwick tree over ranks carrying (count, sum y, sum x, sum xy).
struct Fenwick {
    tree: Vec<[f64; 4]>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![[0.0; 4]; n + 1],
        }
    }

    fn add(&mut self, rank: usize, v: [f64; 4]) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            for k in 0..4 {
                self.tree[i][k] += v[k];
            }
            i += i & i.wrapping_neg();
        }
    }

    /// Sums over ranks `0..=rank`.
    fn prefix(&self, rank: usize) -> [f64; 4] {
        let mut s = [0.0; 4];
        let mut i = rank + 1;
        while i > 0 {
            for k in 0..4 {
                s[k] += self.tree[i][k];
            }
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Per-vector quantities of the O(n log n) distance covariance.
struct DcorSide {
    v: Vec<f64>,
    /// Row sums `sum_j |v_i - v_j|`.
    row: Vec<f64>,
    total: f64,
    dvar: f64,
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl DcorSide {
    fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let v: Vec<f64> = values.iter().map(|x| x - mean).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            rank[i] = k;
        }
        let total_sum: f64 = v.iter().sum();
        let mut row = vec![0.0; n];
        let mut before = 0.0;
        for (k, &i) in order.iter().enumerate() {
            let x = v[i];
            let after = total_sum - before - x;
            row[i] = k as f64 * x - before + after - (n - k - 1) as f64 * x;
            before += x;
        }
        let total: f64 = row.iter().sum();
        let nf = n as f64;
        let sq: f64 = v.iter().map(|x| x * x).sum();
        let sum_sq_dist = 2.0 * nf * sq - 2.0 * total_sum * total_sum;
        let dvar = sum_sq_dist / (nf * nf) - 2.0 * row.iter().map(|r| r * r).sum::<f64>() / nf.powi(3)
            + total * total / nf.powi(4);
        Self {
            v,
            row,
            total,
            dvar,
            order,
            rank,
        }
    }

    /// Squared distance correlation with `other` reindexed by `perm`
    /// (`other` value at row `i` is `other.v[perm[i]]`).
    fn dcor2(&self, other: &DcorSide, perm: Option<&[usize]>) -> f64 {
        let n = self.v.len();
        let map = |i: usize| perm.map_or(i, |p| p[i]);
        let mut fw = Fenwick::new(n);
        let mut tot = [0.0; 4];
        let mut cross = 0.0;
        for &j in &self.order {
            let xj = self.v[j];
            let yj = other.v[map(j)];
            let rj = other.rank[map(j)];
            let lo = fw.prefix(rj);
            let hi = [tot[0] - lo[0], tot[1] - lo[1], tot[2] - lo[2], tot[3] - lo[3]];
            cross += lo[0] * xj * yj - xj * lo[1] - yj * lo[2] + lo[3];
            cross -= hi[0] * xj * yj - xj * hi[1] - yj * hi[2] + hi[3];
            let add = [1.0, yj, xj, xj * yj];
            fw.add(rj, add);
            for k in 0..4 {
                tot[k] += add[k];
            }
        }
        let nf = n as f64;
        let rowdot: f64 = (0..n).map(|i| self.row[i] * other.row[map(i)]).sum();
        let dcov = 2.0 * cross / (nf * nf) - 2.0 * rowdot / nf.powi(3) + self.total * other.total / nf.powi(4);
        let denom = (self.dvar * other.dvar).sqrt();
        if !(denom > 0.0) {
            return 0.0;
        }
        (dcov / denom).max(0.0)
    }
}

/// Sample (V-statistic) distance correlation of two univariate samples.
pub fn distance_correlation(a: &[f64], b: &[f64]) -> f64 {
    DcorSide::new(a).dcor2(&DcorSide::new(b), None).sqrt()
}

/// Orders the pair by content hash so argument order does not matter.
fn canonical<'a>(a: &'a [f64], b: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let (ha, hb) = (hash_f64s(a), hash_f64s(b));
    if (ha, a.len()) <= (hb, b.len()) {
        (a, b)
    } else {
        (b, a)
    }
}

fn permutation_p(exceed: usize, b: usize) -> f64 {
    (1 + exceed) as f64 / (b + 1) as f64
}

// ---------------------------------------------------------------------------
// Gaussian-process residuals

fn standardize_vec(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        v.iter().map(|x| (x - m) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn median_distance(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let stride = n.div_ceil(1000).max(1);
    let pts: Vec<&Vec<f64>> = rows.iter().step_by(stride).collect();
    let mut d = Vec::with_capacity(pts.len() * pts.len() / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(sq_dist(pts[i], pts[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let len = d.len();
    let (_, m, _) = d.select_nth_unstable_by(len / 2, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const LENGTH_SCALES: [f64; 3] = [0.3, 1.0, 3.0];
const NOISE_RATIOS: [f64; 2] = [1e-2, 1e-1];
const JITTERS: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    for &j in &JITTERS {
        let mut a = m.clone();
        if j > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += j;
            }
        }
        if let Some(c) = a.cholesky() {
            return Ok(c);
        }
    }
    Err(Error::GpSolve(format!(
        "kernel matrix of size {} not positive definite after jitter",
        m.nrows()
    )))
}

fn log_det(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Best (log marginal likelihood, residual) per target.
type Fit = Option<(f64, Vec<f64>)>;

fn keep_better(best: &mut Fit, ml: f64, resid: impl FnOnce() -> Vec<f64>) {
    if ml.is_finite() && best.as_ref().is_none_or(|(b, _)| ml > *b) {
        *best = Some((ml, resid()));
    }
}

/// Profile log-likelihood with the signal amplitude maximised analytically.
fn profiled_ml(n: usize, quad: f64, logdet: f64) -> f64 {
    let nf = n as f64;
    if !(quad > 0.0) {
        return f64::NEG_INFINITY;
    }
    -0.5 * nf * (quad / nf).ln() - 0.5 * logdet
}

/// GP regression residuals of each target on `z` (RBF kernel, noise ratio and
/// length scale picked by marginal likelihood over a fixed grid).
fn gp_residuals(z: &[Vec<f64>], targets: &[Vec<f64>], cfg: &CIConfig) -> Result<Vec<Vec<f64>>> {
    let n = targets[0].len();
    let cols: Vec<Vec<f64>> = z.iter().map(|c| standardize_vec(c)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
    let ys: Vec<Vec<f64>> = targets.iter().map(|y| standardize_vec(y)).collect();
    let med = median_distance(&rows);
    let mut best: Vec<Fit> = vec![None; ys.len()];

    if n <= cfg.gp_max_exact {
        let d2 = DMatrix::from_fn(n, n, |i, j| sq_dist(&rows[i], &rows[j]));
        for &s in &LENGTH_SCALES {
            let ell = s * med;
            let k = d2.map(|d| (-d / (2.0 * ell * ell)).exp());
            for &lam in &NOISE_RATIOS {
                let mut m = k.clone();
                for i in 0..n {
                    m[(i, i)] += lam;
                }
                let chol = cholesky_with_jitter(&m)?;
                let ld = log_det(&chol);
                for (y, b) in ys.iter().zip(best.iter_mut()) {
                    let yv = DVector::from_column_slice(y);
                    let alpha = chol.solve(&yv);
                    let quad = yv.dot(&alpha);
                    keep_better(b, profiled_ml(n, quad, ld), || {
                        alpha.iter().map(|a| lam * a).collect()
                    });
                }
            }
        }
    } else {
        let m = cfg.gp_inducing.min(n);
        let inducing: Vec<usize> = (0..m).map(|i| i * n / m).collect();
        for &s in &LENGTH_SCALES {
            let ell = s * med;
            let kern = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / (2.0 * ell * ell)).exp();
            let knm = DMatrix::from_fn(n, m, |i, j| kern(&rows[i], &rows[inducing[j]]));
            let kmm = DMatrix::from_fn(m, m, |i, j| kern(&rows[inducing[i]], &rows[inducing[j]]));
            let chol_mm = cholesky_with_jitter(&kmm)?;
            let ld_mm = log_det(&chol_mm);
            let g = knm.transpose() * &knm;
            for &lam in &NOISE_RATIOS {
                let a = &kmm * lam + &g;
                let chol_a = cholesky_with_jitter(&a)?;
                let ld = log_det(&chol_a) - ld_mm + (n - m) as f64 * lam.ln();
                for (y, b) in ys.iter().zip(best.iter_mut()) {
                    let yv = DVector::from_column_slice(y);
                    let proj = knm.transpose() * &yv;
                    let c = chol_a.solve(&proj);
                    let quad = (yv.dot(&yv) - proj.dot(&c)) / lam;
                    keep_better(b, profiled_ml(n, quad, ld), || {
                        let fit = &knm * &c;
                        y.iter().zip(fit.iter()).map(|(v, f)| v - f).collect()
                    });
                }
            }
        }
    }
    Ok(best
        .into_iter()
        .zip(ys)
        .map(|(b, y)| b.map_or(y, |(_, r)| r))
        .collect())
}

pub fn gpdc(q: &CIQuery, cfg: &CIConfig, seed: u64) -> Result<CITestResult> {
    let n = check_samples(q, cfg)?;
    let (rx, ry) = if q.z.is_empty() {
        (q.x.clone(), q.y.clone())
    } else {
        let mut r = gp_residuals(&q.z, &[q.x.clone(), q.y.clone()], cfg)?;
        let ry = r.pop().unwrap();
        (r.pop().unwrap(), ry)
    };
    let (a, b) = canonical(&rx, &ry);
    let sa = DcorSide::new(a);
    let sb = DcorSide::new(b);
    let observed = sa.dcor2(&sb, None);
    let mut rng = rng_from(stable_mix(seed, 0x6770));
    let mut perm: Vec<usize> = (0..n).collect();
    let mut exceed = 0;
    for _ in 0..cfg.gpdc_permutations {
        perm.shuffle(&mut rng);
        if sa.dcor2(&sb, Some(&perm)) >= observed {
            exceed += 1;
        }
    }
    Ok(CITestResult {
        statistic: observed.sqrt(),
        p_value: permutation_p(exceed, cfg.gpdc_permutations),
        n_effective: n,
        test: TestKind::GPDC,
        variance_floor_hits: 0,
    })
}

// ---------------------------------------------------------------------------
// kNN conditional mutual information

/// Quantities of the estimator that do not depend on `y`.
struct CmiPrep<'a> {
    n: usize,
    k: usize,
    x: &'a [f64],
    z: &'a [Vec<f64>],
    xz: KdTree,
    ztree: Option<KdTree>,
    psi: Vec<f64>,
}

impl<'a> CmiPrep<'a> {
    fn new(x: &'a [f64], z: &'a [Vec<f64>], k: usize) -> Self {
        let n = x.len();
        let mut xz_cols: Vec<&[f64]> = vec![x];
        xz_cols.extend(z.iter().map(|c| c.as_slice()));
        let z_cols: Vec<&[f64]> = z.iter().map(|c| c.as_slice()).collect();
        Self {
            n,
            k,
            x,
            z,
            xz: KdTree::new(&xz_cols),
            ztree: (!z.is_empty()).then(|| KdTree::new(&z_cols)),
            psi: (0..=n + 1).map(|m| if m == 0 { 0.0 } else { digamma(m as f64) }).collect(),
        }
    }

    /// `psi(k) - mean(psi(k_xz + 1) + psi(k_yz + 1) - psi(k_z + 1))` with
    /// neighbour counts strictly inside the k-th neighbour distance in the
    /// joint space (max-norm).
    fn statistic(&self, y: &[f64]) -> f64 {
        let n = self.n;
        let mut joint: Vec<&[f64]> = vec![self.x, y];
        joint.extend(self.z.iter().map(|c| c.as_slice()));
        let joint = KdTree::new(&joint);
        let yz = KdTree::new(&joint_cols(y, self.z));
        let mut sum = 0.0;
        for i in 0..n {
            let eps = joint.kth_distance(i, self.k);
            let k_xz = self.xz.count_within(i, eps).saturating_sub(1);
            let k_yz = yz.count_within(i, eps).saturating_sub(1);
            let k_z = match &self.ztree {
                Some(t) => t.count_within(i, eps).saturating_sub(1),
                None => n - 1,
            };
            sum += self.psi[k_xz + 1] + self.psi[k_yz + 1] - self.psi[k_z + 1];
        }
        self.psi[self.k] - sum / n as f64
    }

    /// The `m` nearest rows to each row in z space (self first).
    fn z_neighbours(&self, m: usize) -> Vec<Vec<usize>> {
        let t = self.ztree.as_ref().expect("z present");
        (0..self.n)
            .map(|i| t.nearest(i, m).into_iter().map(|(_, j)| j).collect())
            .collect()
    }
}

fn joint_cols<'a>(y: &'a [f64], z: &'a [Vec<f64>]) -> Vec<&'a [f64]> {
    let mut cols: Vec<&[f64]> = vec![y];
    cols.extend(z.iter().map(|c| c.as_slice()));
    cols
}

/// Standardised copies of the canonical `(x, y, z)` plus a tiny seeded jitter
/// that breaks exact ties.
fn cmi_inputs(q: &CIQuery, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let (a, b) = canonical(&q.x, &q.y);
    let mut rng = rng_from(stable_mix(seed, 0x6a69));
    let mut prep = |v: &[f64]| -> Vec<f64> {
        standardize_vec(v)
            .into_iter()
            .map(|x| x + 1e-6 * rng.random::<f64>())
            .collect()
    };
    let x = prep(a);
    let y = prep(b);
    let z = q.z.iter().map(|c| prep(c)).collect();
    (x, y, z)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Config(format!("CMIknn needs 1 <= k < n (k = {k}, n = {n})")));
    }
    Ok(())
}

/// kNN estimate of `I(x; y | z)` in nats (mutual information when `z` is empty).
pub fn cmi_knn_statistic(q: &CIQuery, k: usize, seed: u64) -> Result<f64> {
    check_k(k, q.n())?;
    let (x, y, z) = cmi_inputs(q, seed);
    Ok(CmiPrep::new(&x, &z, k).statistic(&y))
}

/// CMI estimate with a local permutation test: `y` is shuffled only among the
/// nearest neighbours in z space (a full shuffle when `z` is empty).
pub fn cmi_knn(q: &CIQuery, k: usize, permutations: usize, cfg: &CIConfig, seed: u64) -> Result<CITestResult> {
    let n = check_samples(q, cfg)?;
    check_k(k, n)?;
    let (x, y, z) = cmi_inputs(q, seed);
    let prep = CmiPrep::new(&x, &z, k);
    let observed = prep.statistic(&y);
    let mut rng = rng_from(stable_mix(seed, 0x7065));
    let mut neighbours = if prep.ztree.is_some() {
        Some(prep.z_neighbours(cfg.shuffle_neighbors.min(n)))
    } else {
        None
    };
    let mut exceed = 0;
    let mut visit: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    let mut yp = vec![0.0; n];
    for _ in 0..permutations {
        match &mut neighbours {
            None => {
                visit.shuffle(&mut rng);
                for (t, &s) in visit.iter().enumerate() {
                    yp[t] = y[s];
                }
            }
            Some(nb) => {
                for row in nb.iter_mut() {
                    row.shuffle(&mut rng);
                }
                visit.shuffle(&mut rng);
                used.iter_mut().for_each(|u| *u = false);
                for &i in &visit {
                    let row = &nb[i];
                    let mut m = 0;
                    while used[row[m]] && m + 1 < row.len() {
                        m += 1;
                    }
                    let pick = row[m];
                    used[pick] = true;
                    yp[i] = y[pick];
                }
            }
        }
        if prep.statistic(&yp) >= observed {
            exceed += 1;
        }
    }
    Ok(CITestResult {
        statistic: observed,
        p_value: permutation_p(exceed, permutations),
        n_effective: n,
        test: TestKind::CMIknn,
        variance_floor_hits: 0,
    })
}
