//! Independent reference implementations used as oracles. Each one takes a
//! deliberately different route from the library code it checks.
#![allow(dead_code)]

use dualcal_core::conformal::Neighbor;

/// Minimum weighted squared error over all monotone step fits, found by
/// enumerating every partition of the (deduplicated, sorted) scores into
/// contiguous blocks fitted at their weighted means. Returns the objective
/// evaluated on the original points.
pub fn isotonic_objective_oracle(points: &[(f64, f64, f64)]) -> f64 {
    // Group exact score duplicates: each group must share one fitted value.
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut last = f64::NAN;
    for &(s, y, w) in &sorted {
        if s == last {
            groups.last_mut().unwrap().push((y, w));
        } else {
            groups.push(vec![(y, w)]);
            last = s;
        }
    }
    let g = groups.len();
    let mut best = f64::INFINITY;
    // Bit i set means a cut between group i and group i + 1.
    for mask in 0u32..(1 << (g - 1)) {
        let mut blocks: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (i, grp) in groups.iter().enumerate() {
            blocks.last_mut().unwrap().extend(grp.iter().copied());
            if i + 1 < g && mask & (1 << i) != 0 {
                blocks.push(Vec::new());
            }
        }
        let means: Vec<f64> = blocks
            .iter()
            .map(|b| {
                let w: f64 = b.iter().map(|p| p.1).sum();
                b.iter().map(|p| p.0 * p.1).sum::<f64>() / w
            })
            .collect();
        if means.windows(2).any(|m| m[0] > m[1] + 1e-12) {
            continue;
        }
        let obj: f64 = blocks
            .iter()
            .zip(&means)
            .map(|(b, m)| b.iter().map(|(y, w)| w * (y - m) * (y - m)).sum::<f64>())
            .sum();
        best = best.min(obj);
    }
    best
}

/// Full sort of every distance, stable on index, truncated to `k`.
pub fn knn_oracle(points: &[Vec<f64>], query: &[f64], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(index, p)| Neighbor {
            index,
            distance: p
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
        })
        .collect();
    all.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap());
    all.truncate(k);
    all
}

/// `P(W <= w)` by visiting every sign assignment of `ranks`.
pub fn wilcoxon_enumeration(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len();
    assert!(n <= 20, "enumeration oracle is exponential");
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Average ranks by counting: rank = #less + (#equal + 1) / 2.
pub fn ranks_by_counting(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|u| *u < v).count() as f64;
            let equal = values.iter().filter(|u| *u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Friedman statistic in the variance-ratio form
/// `(k - 1) * sum_j (R_j - n (k + 1) / 2)^2 / (sum r^2 - n k (k + 1)^2 / 4)`,
/// which incorporates the tie correction without a separate factor.
pub fn friedman_oracle(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let kf = k as f64;
    let ranked: Vec<Vec<f64>> = rows.iter().map(|r| ranks_by_counting(r)).collect();
    let a: f64 = ranked.iter().flatten().map(|r| r * r).sum();
    let c = n * kf * (kf + 1.0).powi(2) / 4.0;
    if (a - c).abs() < 1e-12 {
        return 0.0;
    }
    let between: f64 = (0..k)
        .map(|j| {
            let rj: f64 = ranked.iter().map(|r| r[j]).sum();
            (rj - n * (kf + 1.0) / 2.0).powi(2)
        })
        .sum();
    (kf - 1.0) * between / (a - c)
}

/// Holm adjustment straight from the definition: for each hypothesis, the
/// largest `(m - j) * p_(j)` over all hypotheses ranked at or before it.
pub fn holm_oracle(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let pos: Vec<usize> = {
        let mut pos = vec![0; m];
        for (j, &i) in order.iter().enumerate() {
            pos[i] = j;
        }
        pos
    };
    (0..m)
        .map(|i| {
            (0..=pos[i])
                .map(|j| ((m - j) as f64 * p[order[j]]).min(1.0))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Entropy normalized by `ln C`, summed with `ln` directly.
pub fn entropy_oracle(row: &[f64]) -> f64 {
    let h: f64 = row.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    h / (row.len() as f64).ln()
}
