//! Null moments of NNCT cell counts, column sums and the derived test vectors.
//!
//! Every moment is conditional on the class sizes and on the nearest-neighbor
//! geometry through `Q` and `R`. Under random labeling these are fixed; under
//! CSR independence the moments are conditional on their observed values.
//!
//! `Cov[N_ij, N_kl]` is assembled from the six kinds of ordered point pairs
//! `(p, q)` of the digraph:
//!
//! | pair kind                                  | count           | labeled points          |
//! |--------------------------------------------|-----------------|-------------------------|
//! | `p = q`                                    | `n`             | `p, nn(p)`              |
//! | reflexive, `q = nn(p)`, `p = nn(q)`        | `R`             | `p, q`                  |
//! | `q = nn(p)`, `p != nn(q)`                  | `n - R`         | `p, q, nn(q)`           |
//! | `p = nn(q)`, `q != nn(p)`                  | `n - R`         | `q, p, nn(p)`           |
//! | shared neighbor `nn(p) = nn(q)`            | `Q`             | `p, q, nn(p)`           |
//! | all four points distinct                   | `n^2-3n+R-Q`    | `p, nn(p), q, nn(q)`    |
//!
//! Each kind contributes its count times the probability that the listed
//! distinct points carry the required labels under a uniformly random labeling.

use nalgebra::DMatrix;

use crate::error::{NnctError, Result};
use crate::linalg::{self, symmetric_eigenvalues};
use crate::nn::NnDigraph;
use crate::stat_tests::Family;

/// Class sizes plus the digraph statistics the moments depend on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentContext {
    sizes: Vec<u64>,
    n: u64,
    q: u64,
    r: u64,
}

impl MomentContext {
    pub fn new(sizes: Vec<u64>, q: u64, r: u64) -> Result<Self> {
        let n: u64 = sizes.iter().sum();
        if sizes.is_empty() || n < 2 {
            return Err(NnctError::DegenerateContext(format!("need n >= 2, got {n}")));
        }
        if !r.is_multiple_of(2) || r > n {
            return Err(NnctError::DegenerateContext(format!("R = {r} must be even and at most n = {n}")));
        }
        let ctx = MomentContext { sizes, n, q, r };
        if ctx.disjoint_pairs() < 0.0 {
            return Err(NnctError::DegenerateContext(format!(
                "Q = {q}, R = {r} inconsistent with n = {n} (n^2 - 3n + R - Q < 0)"
            )));
        }
        Ok(ctx)
    }

    pub fn from_graph(sizes: Vec<u64>, graph: &NnDigraph) -> Result<Self> {
        let n: u64 = sizes.iter().sum();
        if n != graph.len() as u64 {
            return Err(NnctError::Consistency(format!(
                "class sizes sum to {n}, graph has {} points",
                graph.len()
            )));
        }
        Self::new(sizes, graph.q(), graph.r())
    }

    /// Context of the 2-class table pooling every class but `focus`.
    pub fn one_vs_rest(&self, focus: usize) -> Result<Self> {
        let ni = *self
            .sizes
            .get(focus)
            .ok_or_else(|| NnctError::Argument(format!("focus class {focus} out of range")))?;
        Self::new(vec![ni, self.n - ni], self.q, self.r)
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn num_classes(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    fn disjoint_pairs(&self) -> f64 {
        let (n, q, r) = (self.n as f64, self.q as f64, self.r as f64);
        n * n - 3.0 * n + r - q
    }

    /// Probability that `classes.len()` distinct points drawn without
    /// replacement carry the given class labels, in order.
    ///
    /// Evaluates to exactly 0 whenever some class is requested more often than
    /// it has members, including the vanishing-numerator cases for small
    /// classes.
    pub fn tuple_prob(&self, classes: &[usize]) -> f64 {
        let mut sorted = classes.to_vec();
        sorted.sort_unstable();
        let mut num = 1.0;
        let mut run = 0u64;
        for (idx, &c) in sorted.iter().enumerate() {
            if idx > 0 && sorted[idx - 1] == c {
                run += 1;
            } else {
                run = 0;
            }
            let avail = self.sizes[c].saturating_sub(run);
            if avail == 0 {
                return 0.0;
            }
            num *= avail as f64;
        }
        let den: f64 = (0..classes.len() as u64).map(|t| (self.n - t) as f64).product();
        num / den
    }

    /// `p_ii` or `p_ij` (pair probability).
    pub fn p2(&self, i: usize, j: usize) -> f64 {
        self.tuple_prob(&[i, j])
    }

    /// `p_iii` or `p_iij` (triplet probability).
    pub fn p3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.tuple_prob(&[i, j, k])
    }

    /// `p_iiii` or `p_iijj` (quartet probability).
    pub fn p4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.tuple_prob(&[i, j, k, l])
    }
}

/// `E[N_ij]`: `n_i (n_i - 1) / (n - 1)` on the diagonal, `n_i n_j / (n - 1)` off it.
pub fn expected_counts(ctx: &MomentContext) -> DMatrix<f64> {
    let m = ctx.num_classes();
    let n1 = (ctx.n - 1) as f64;
    DMatrix::from_fn(m, m, |i, j| {
        let ni = ctx.sizes[i] as f64;
        if i == j {
            ni * (ni - 1.0) / n1
        } else {
            ni * ctx.sizes[j] as f64 / n1
        }
    })
}

/// `Var[N_ij]` from the closed-form diagonal/off-diagonal expressions.
pub fn variance_counts(ctx: &MomentContext) -> Result<DMatrix<f64>> {
    let m = ctx.num_classes();
    let (n, q, r) = (ctx.n as f64, ctx.q as f64, ctx.r as f64);
    let quartets = ctx.disjoint_pairs();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mean = n * ctx.p2(i, j);
            let v = if i == j {
                (n + r) * ctx.p2(i, i) + (2.0 * n - 2.0 * r + q) * ctx.p3(i, i, i) + quartets * ctx.p4(i, i, i, i)
                    - mean * mean
            } else {
                n * ctx.p2(i, j) + q * ctx.p3(i, i, j) + quartets * ctx.p4(i, i, j, j) - mean * mean
            };
            if v < -1e-9 * mean.powi(2).max(1.0) {
                return Err(NnctError::Numeric(format!(
                    "negative variance {v:e} for cell ({}, {}); check Q and R",
                    i + 1,
                    j + 1
                )));
            }
            out[(i, j)] = v.max(0.0);
        }
    }
    Ok(out)
}

/// Full covariance of the row-major flattened count vector `N`.
pub fn covariance_counts(ctx: &MomentContext) -> Result<DMatrix<f64>> {
    let m = ctx.num_classes();
    let (n, q, r) = (ctx.n as f64, ctx.q as f64, ctx.r as f64);
    let quartets = ctx.disjoint_pairs();
    let mean = expected_counts(ctx);
    let mm = m * m;
    let mut cov = DMatrix::zeros(mm, mm);
    for (a, (i, j)) in cells(m).enumerate() {
        for (b, (k, l)) in cells(m).enumerate() {
            let mut s = quartets * ctx.p4(i, j, k, l);
            if i == k && j == l {
                s += n * ctx.p2(i, j);
            }
            if j == k && i == l {
                s += r * ctx.p2(i, j);
            }
            if j == k {
                s += (n - r) * ctx.p3(i, j, l);
            }
            if i == l {
                s += (n - r) * ctx.p3(k, i, j);
            }
            if j == l {
                s += q * ctx.p3(i, k, j);
            }
            cov[(a, b)] = s - mean[(i, j)] * mean[(k, l)];
        }
    }
    let scale = cov.amax().max(1.0);
    let asym = (&cov - cov.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(NnctError::Numeric(format!("count covariance asymmetric by {asym:e}")));
    }
    Ok((&cov + cov.transpose()) * 0.5)
}

/// `(Cov[N_ij, C_l], Cov[C_i, C_j])` by summing the count covariance:
/// `Cov[N_ij, C_l] = sum_k Cov[N_ij, N_kl]`, `Cov[C_i, C_j] = sum_k sum_l Cov[N_ki, N_lj]`.
pub fn colsum_covariances(m: usize, cov: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mm = m * m;
    let count_col = DMatrix::from_fn(mm, m, |a, l| (0..m).map(|k| cov[(a, k * m + l)]).sum());
    let col_col = DMatrix::from_fn(m, m, |i, j| {
        (0..m)
            .flat_map(|k| (0..m).map(move |l| (k, l)))
            .map(|(k, l)| cov[(k * m + i, l * m + j)])
            .sum()
    });
    (count_col, col_col)
}

pub(crate) fn cells(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (0..m).map(move |j| (i, j)))
}

/// All count-level moments for one context.
#[derive(Debug, Clone)]
pub struct MomentSet {
    ctx: MomentContext,
    exp_counts: DMatrix<f64>,
    var_counts: DMatrix<f64>,
    cov_counts: DMatrix<f64>,
    cov_count_colsum: DMatrix<f64>,
    cov_colsums: DMatrix<f64>,
}

impl MomentSet {
    pub fn new(ctx: &MomentContext) -> Result<Self> {
        let m = ctx.num_classes();
        let exp_counts = expected_counts(ctx);
        let var_counts = variance_counts(ctx)?;
        let cov_counts = covariance_counts(ctx)?;
        let (cov_count_colsum, cov_colsums) = colsum_covariances(m, &cov_counts);
        Ok(MomentSet {
            ctx: ctx.clone(),
            exp_counts,
            var_counts,
            cov_counts,
            cov_count_colsum,
            cov_colsums,
        })
    }

    pub fn context(&self) -> &MomentContext {
        &self.ctx
    }

    pub fn num_classes(&self) -> usize {
        self.ctx.num_classes()
    }

    /// `E[N_ij]`, `m x m`.
    pub fn exp_counts(&self) -> &DMatrix<f64> {
        &self.exp_counts
    }

    /// `Var[N_ij]`, `m x m`.
    pub fn var_counts(&self) -> &DMatrix<f64> {
        &self.var_counts
    }

    /// `Cov[N_ij, N_kl]`, `m^2 x m^2`, rows and columns in row-major cell order.
    pub fn cov_counts(&self) -> &DMatrix<f64> {
        &self.cov_counts
    }

    /// `Cov[N_ij, C_l]`, `m^2 x m`.
    pub fn cov_count_colsum(&self) -> &DMatrix<f64> {
        &self.cov_count_colsum
    }

    /// `Cov[C_i, C_j]`, `m x m`.
    pub fn cov_colsums(&self) -> &DMatrix<f64> {
        &self.cov_colsums
    }

    /// Expectations, covariance and g-inverse ingredients for one test family.
    pub fn family(&self, family: Family) -> Result<FamilyMoments> {
        FamilyMoments::new(self, family)
    }
}

/// Test vector `T = a * N - b * C_col - shift` of one family with its null
/// expectation and covariance.
#[derive(Debug, Clone)]
pub struct FamilyMoments {
    family: Family,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    shift: Vec<f64>,
    expectation: Vec<f64>,
    sigma: DMatrix<f64>,
    rank: usize,
    reference_cells: Vec<usize>,
    reference_inverse: Option<DMatrix<f64>>,
}

/// Relative eigenvalue cutoff for PSD checks and numerical rank.
pub const RANK_TOL: f64 = 1e-8;

impl FamilyMoments {
    fn new(ms: &MomentSet, family: Family) -> Result<Self> {
        let ctx = &ms.ctx;
        let m = ctx.num_classes();
        let n = ctx.n as f64;
        let size = |i: usize| ctx.sizes[i] as f64;

        let mut a = vec![1.0; m * m];
        let mut b = vec![0.0; m * m];
        let mut shift = vec![0.0; m * m];
        for (idx, (i, j)) in cells(m).enumerate() {
            let ni = size(i);
            match family {
                Family::Dixon => {}
                Family::TypeI => b[idx] = ni / n,
                Family::TypeII => shift[idx] = ni * size(j) / n,
                Family::TypeIII => {
                    b[idx] = if i == j { (ni - 1.0) / (n - 1.0) } else { ni / (n - 1.0) };
                }
                Family::TypeIV => {
                    if i == j {
                        if ctx.sizes[i] < 2 {
                            return Err(NnctError::DegenerateClass {
                                class: i + 1,
                                reason: format!("type IV diagonal needs n_i >= 2, got {}", ctx.sizes[i]),
                            });
                        }
                        a[idx] = ni * (n - 1.0) / (n * (ni - 1.0));
                    } else {
                        a[idx] = (n - 1.0) / n;
                    }
                    b[idx] = ni / n;
                }
            }
        }

        let expectation: Vec<f64> = match family {
            Family::Dixon => cells(m).map(|(i, j)| ms.exp_counts[(i, j)]).collect(),
            Family::TypeI | Family::TypeII => cells(m)
                .map(|(i, j)| {
                    let ni = size(i);
                    if i == j {
                        ni * (ni - n) / (n * (n - 1.0))
                    } else {
                        ni * size(j) / (n * (n - 1.0))
                    }
                })
                .collect(),
            Family::TypeIII | Family::TypeIV => vec![0.0; m * m],
        };

        // Cov[a N_ij - b C_j, a' N_kl - b' C_l]
        let cnn = &ms.cov_counts;
        let cnc = &ms.cov_count_colsum;
        let ccc = &ms.cov_colsums;
        let mm = m * m;
        let mut sigma = DMatrix::zeros(mm, mm);
        for (x, (_, j)) in cells(m).enumerate() {
            for (y, (_, l)) in cells(m).enumerate() {
                sigma[(x, y)] = a[x] * a[y] * cnn[(x, y)] - a[x] * b[y] * cnc[(x, l)] - b[x] * a[y] * cnc[(y, j)]
                    + b[x] * b[y] * ccc[(j, l)];
            }
        }
        sigma = (&sigma + sigma.transpose()) * 0.5;

        let eig = symmetric_eigenvalues(&sigma);
        let max_ev = eig.iter().cloned().fold(0.0f64, f64::max);
        let min_ev = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_ev < -RANK_TOL * max_ev.max(f64::MIN_POSITIVE) && min_ev < -1e-12 {
            return Err(NnctError::NotPsd {
                min_eigenvalue: min_ev,
                max_eigenvalue: max_ev,
            });
        }
        let rank = eig.iter().filter(|&&ev| ev > RANK_TOL * max_ev).count();

        let reference_cells: Vec<usize> = cells(m)
            .enumerate()
            .filter(|&(_, (i, j))| j + 1 != m && (!family.uses_column_sums() || i + 1 != m))
            .map(|(idx, _)| idx)
            .collect();
        let reference_inverse = if reference_cells.is_empty() {
            None
        } else {
            let sub = sigma.select_rows(&reference_cells).select_columns(&reference_cells);
            nalgebra::Cholesky::new(sub).map(|c| c.inverse())
        };

        Ok(FamilyMoments {
            family,
            m,
            a,
            b,
            shift,
            expectation,
            sigma,
            rank,
            reference_cells,
            reference_inverse,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn num_classes(&self) -> usize {
        self.m
    }

    /// Null expectation of the test vector (row-major).
    pub fn expectation(&self) -> &[f64] {
        &self.expectation
    }

    /// Null covariance of the test vector.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Numerical rank of `sigma` at cutoff `1e-8 * lambda_max`.
    pub fn numerical_rank(&self) -> usize {
        self.rank
    }

    /// Coefficients `(a, b, shift)` of `T_ij = a_ij N_ij - b_ij C_j - shift_ij`.
    pub fn coefficients(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.a, &self.b, &self.shift)
    }

    /// Cells whose principal sub-block of `sigma` is inverted for the
    /// reference-cell generalized inverse.
    pub fn reference_cells(&self) -> &[usize] {
        &self.reference_cells
    }

    pub(crate) fn reference_inverse(&self) -> Option<&DMatrix<f64>> {
        self.reference_inverse.as_ref()
    }

    /// Observed test vector `T` (row-major).
    pub fn statistic_vector(&self, counts: &[f64], col_sums: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m * m)
            .map(|idx| self.a[idx] * counts[idx] - self.b[idx] * col_sums[idx % m] - self.shift[idx])
            .collect()
    }

    /// `T - E[T]`.
    pub fn centered(&self, counts: &[f64], col_sums: &[f64]) -> Vec<f64> {
        self.statistic_vector(counts, col_sums)
            .into_iter()
            .zip(&self.expectation)
            .map(|(t, e)| t - e)
            .collect()
    }

    pub(crate) fn pseudo_inverse(&self) -> Result<DMatrix<f64>> {
        linalg::pseudo_inverse(&self.sigma, RANK_TOL)
    }
}

/// `(Sigma_family, E[T_family])` for one family.
pub fn sigma_for_family(family: Family, moments: &MomentSet) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let fm = moments.family(family)?;
    Ok((fm.sigma.clone(), fm.expectation.clone()))
}
