//! Rank-based comparison of methods over repeated runs: Friedman omnibus
//! test, one-sided Wilcoxon signed-rank test, Holm step-down adjustment and
//! Cliff's delta.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, shape, Result};
use crate::special::{chi_square_sf, normal_cdf};

/// Largest effective sample size that always gets the exact Wilcoxon null.
pub const WILCOXON_EXACT_MAX: usize = 25;
/// Largest untied effective sample size that still gets the exact null.
pub const WILCOXON_EXACT_UNTIED_MAX: usize = 30;

/// One metric per run (rows) and method (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RunMatrix {
    runs: usize,
    methods: Vec<String>,
    values: Vec<f64>,
}

impl RunMatrix {
    /// `values` is run-major: `values[r * k + j]` is method `j` in run `r`.
    pub fn new(methods: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let k = methods.len();
        if k < 2 {
            return Err(shape!("need at least 2 methods, got {k}"));
        }
        if !values.len().is_multiple_of(k) {
            return Err(shape!("{} values do not fill rows of {k} methods", values.len()));
        }
        let runs = values.len() / k;
        if runs < 2 {
            return Err(shape!("need at least 2 runs, got {runs}"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain!(
                "run {} of method {} is not finite",
                i / k,
                methods[i % k]
            ));
        }
        Ok(Self {
            runs,
            methods,
            values,
        })
    }

    pub fn from_columns(methods: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != methods.len() {
            return Err(shape!("{} names for {} columns", methods.len(), columns.len()));
        }
        let runs = columns.first().map_or(0, Vec::len);
        if let Some(j) = columns.iter().position(|c| c.len() != runs) {
            return Err(shape!(
                "column {} has {} runs, expected {runs}",
                methods[j],
                columns[j].len()
            ));
        }
        let values = (0..runs)
            .flat_map(|r| columns.iter().map(move |c| c[r]))
            .collect();
        Self::new(methods, values)
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn run(&self, r: usize) -> &[f64] {
        let k = self.methods.len();
        &self.values[r * k..(r + 1) * k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.runs).map(|r| self.run(r)[j]).collect()
    }
}

/// Average ranks (1-based, smallest first) and the tie-group sizes.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j share the mean of ranks i+1..=j.
        let rank = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub average_ranks: Vec<f64>,
}

/// Tie-corrected Friedman chi-square with `k - 1` degrees of freedom.
pub fn friedman(rm: &RunMatrix) -> FriedmanResult {
    let n = rm.runs as f64;
    let k = rm.methods.len();
    let kf = k as f64;
    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for r in 0..rm.runs {
        let (ranks, ties) = average_ranks(rm.run(r));
        for (s, x) in rank_sums.iter_mut().zip(&ranks) {
            *s += x;
        }
        tie_term += ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let average_ranks = rank_sums.iter().map(|s| s / n).collect();
    let correction = 1.0 - tie_term / (n * kf * (kf * kf - 1.0));
    if correction <= 1e-12 {
        return FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            average_ranks,
        };
    }
    let sum_sq: f64 = rank_sums.iter().map(|s| s * s).sum();
    let raw = 12.0 / (n * kf * (kf + 1.0)) * sum_sq - 3.0 * n * (kf + 1.0);
    let statistic = (raw / correction).max(0.0);
    FriedmanResult {
        statistic,
        p_value: chi_square_sf(statistic, kf - 1.0),
        average_ranks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    /// Normal approximation with tie-adjusted variance and continuity
    /// correction.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `x - y`.
    pub statistic: f64,
    /// `P(W <= statistic)` under the null; small values favour `x < y`.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    pub method: WilcoxonMethod,
}

/// Signed-rank test of `median(x - y) < 0`. Zero differences are dropped and
/// tied magnitudes share average ranks. Returns `None` when every difference
/// is zero.
pub fn wilcoxon_one_sided(x: &[f64], y: &[f64]) -> Result<Option<WilcoxonResult>> {
    if x.len() != y.len() {
        return Err(shape!("paired samples of lengths {} and {}", x.len(), y.len()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(domain!("paired differences must be finite"));
    }
    if diffs.is_empty() {
        return Ok(None);
    }
    let n = diffs.len();
    if n < 5 {
        return Err(domain!(
            "need at least 5 non-zero differences for the signed-rank test, got {n}"
        ));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);
    let w = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .fold(0.0, |acc, (r, _)| acc + r);

    let exact = n <= WILCOXON_EXACT_MAX || (n <= WILCOXON_EXACT_UNTIED_MAX && ties.is_empty());
    let (p_value, method) = if exact {
        (exact_lower_tail(&ranks, w), WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_adj: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
        let z = (w + 0.5 - mean) / libm::sqrt(var);
        (normal_cdf(z), WilcoxonMethod::Normal)
    };
    Ok(Some(WilcoxonResult {
        statistic: w,
        p_value: p_value.min(1.0),
        n_effective: n,
        method,
    }))
}

// Null distribution of W over all 2^n sign patterns, by dynamic programming
// on doubled ranks (average ranks are half-integers).
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| libm::round(2.0 * r) as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let limit = libm::round(2.0 * w) as usize;
    let hits: f64 = counts[..=limit.min(total)].iter().sum();
    hits / libm::pow(2.0, ranks.len() as f64)
}

/// Holm step-down adjustment, returned in input order.
pub fn holm(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(domain!("p-value {p} lies outside [0, 1]"));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * pvals[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// `(#(x_i > y_j) - #(x_i < y_j)) / (|x| |y|)`.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(domain!("Cliff's delta needs two non-empty samples"));
    }
    let mut score = 0i64;
    for a in x {
        for b in y {
            score += match a.partial_cmp(b) {
                Some(core::cmp::Ordering::Greater) => 1,
                Some(core::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    Ok(score as f64 / (x.len() * y.len()) as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// One reference-versus-baseline comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRow {
    pub reference: String,
    pub baseline: String,
    pub wilcoxon: Option<WilcoxonResult>,
    /// Holm-adjusted across the rows that have a defined p-value.
    pub holm_p: Option<f64>,
    pub cliffs_delta: f64,
    /// Median of `reference - baseline` over runs.
    pub median_difference: f64,
}

/// Tests whether the `reference` column is smaller than each other column.
pub fn compare_to_reference(rm: &RunMatrix, reference: usize) -> Result<Vec<PairwiseRow>> {
    let k = rm.methods.len();
    if reference >= k {
        return Err(domain!("reference column {reference} out of range for {k} methods"));
    }
    let x = rm.column(reference);
    let mut rows = Vec::with_capacity(k - 1);
    for j in (0..k).filter(|&j| j != reference) {
        let y = rm.column(j);
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        rows.push(PairwiseRow {
            reference: rm.methods[reference].clone(),
            baseline: rm.methods[j].clone(),
            wilcoxon: wilcoxon_one_sided(&x, &y)?,
            holm_p: None,
            cliffs_delta: cliffs_delta(&x, &y)?,
            median_difference: median(&diffs).unwrap_or(0.0),
        });
    }
    let defined: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].wilcoxon.is_some()).collect();
    let raw: Vec<f64> = defined
        .iter()
        .filter_map(|&i| rows[i].wilcoxon.map(|w| w.p_value))
        .collect();
    for (&i, p) in defined.iter().zip(holm(&raw)?) {
        rows[i].holm_p = Some(p);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| alloc::format!("m{j}")).collect()
    }

    #[test]
    fn friedman_identical_ranking() {
        let values: Vec<f64> = (0..30)
            .flat_map(|r| (0..4).map(move |j| j as f64 + r as f64 * 0.01))
            .collect();
        let f = friedman(&RunMatrix::new(names(4), values).unwrap());
        assert_eq!(f.statistic, 90.0);
        assert_eq!(f.average_ranks, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(f.p_value < 3e-19 && f.p_value > 2.1e-19);
    }

    #[test]
    fn friedman_forced_and_tied() {
        let f = friedman(&RunMatrix::new(names(2), vec![0.1, 0.2, 0.3, 0.9, 0.0, 5.0]).unwrap());
        assert_eq!(f.average_ranks, vec![1.0, 2.0]);

        let f = friedman(&RunMatrix::new(names(2), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap());
        assert_eq!(f.average_ranks, vec![1.5, 1.5]);
        assert_eq!((f.statistic, f.p_value), (0.0, 1.0));
    }

    #[test]
    fn run_matrix_validation() {
        assert!(RunMatrix::new(names(1), vec![1.0, 2.0]).is_err());
        assert!(RunMatrix::new(names(2), vec![1.0, 2.0]).is_err());
        assert!(RunMatrix::new(names(2), vec![1.0, 2.0, 3.0]).is_err());
        let rm = RunMatrix::from_columns(names(2), &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(rm.run(1), &[2.0, 4.0]);
    }

    #[test]
    fn wilcoxon_extremes() {
        let x: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let y: Vec<f64> = (1..=30).map(|i| 2.0 * i as f64).collect();
        let r = wilcoxon_one_sided(&x, &y).unwrap().unwrap();
        assert_eq!(r.statistic.to_bits(), 0.0f64.to_bits());
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.p_value, libm::pow(2.0, -30.0));
        assert!((r.p_value - 9.31e-10).abs() < 1e-12);

        let r = wilcoxon_one_sided(&y, &x).unwrap().unwrap();
        assert_eq!(r.statistic, 465.0);
        assert_eq!(r.p_value, 1.0);

        assert_eq!(wilcoxon_one_sided(&x, &x).unwrap(), None);
        assert!(wilcoxon_one_sided(&x[..4], &y[..4]).is_err());
    }

    #[test]
    fn wilcoxon_large_tied_uses_normal() {
        let x: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 2.0 }).collect();
        let y = vec![0.0; 40];
        let r = wilcoxon_one_sided(&x, &y).unwrap().unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm(&[0.03]).unwrap(), vec![0.03]);
        let a = holm(&[0.01, 0.04]).unwrap();
        assert!((a[0] - 0.02).abs() < 1e-15 && a[1] == 0.04);
        let a = holm(&[0.04, 0.01]).unwrap();
        assert!((a[1] - 0.02).abs() < 1e-15 && a[0] == 0.04);
        assert!(holm(&[0.6, 0.7, 0.9]).unwrap().iter().all(|&p| p <= 1.0));
        assert!(holm(&[1.5]).is_err());
    }

    #[test]
    fn cliffs_examples() {
        assert_eq!(cliffs_delta(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cliffs_delta(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), -1.0);
        assert_eq!(cliffs_delta(&[1.0, 3.0], &[2.0]).unwrap(), 0.0);
        assert!(cliffs_delta(&[], &[1.0]).is_err());
    }

    #[test]
    fn pairwise_table() {
        let dual: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let iso: Vec<f64> = (0..30).map(|i| i as f64 + 1.0 + i as f64 * 0.01).collect();
        let rm = RunMatrix::from_columns(
            vec!["dual".to_string(), "iso".to_string()],
            &[dual, iso],
        )
        .unwrap();
        let rows = compare_to_reference(&rm, 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].baseline, "iso");
        assert_eq!(rows[0].holm_p, Some(libm::pow(2.0, -30.0)));
        assert_eq!(rows[0].cliffs_delta, -rows[0].cliffs_delta.abs());
        assert!(rows[0].median_difference < 0.0);
    }
}
