/// Mean and sample standard deviation of each column of `rows`.
fn column_stats(rows: &[Vec<f64>], m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..m).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let std = (0..m)
        .map(|i| (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    (mean, std)
}

/// Anti-correlation update. `log_relatives` holds the most recent rows of
/// `ln(p_t / p_t-1)`, today last; fewer than `2 * window` rows (or a window
/// below 2) leaves `w` unchanged.
///
/// With `LX1`, `LX2` the two adjacent windows, `Mcor[i][j]` is the
/// correlation of asset `i` in `LX1` with asset `j` in `LX2` (zero when
/// either side has no variance). Asset `i` cedes weight to `j` when `i` grew
/// faster over the recent window and `Mcor[i][j] > 0`; the claim is
/// `Mcor[i][j]` plus `|Mcor[h][h]|` for each of `h = i, j` whose
/// self-correlation is negative. Each asset hands out its weight in
/// proportion to its claims.
pub fn anticor_update(w: &[f64], log_relatives: &[Vec<f64>], window: usize) -> Vec<f64> {
    let m = w.len();
    if window < 2 || log_relatives.len() < 2 * window {
        return w.to_vec();
    }
    let recent = &log_relatives[log_relatives.len() - 2 * window..];
    let (lx1, lx2) = recent.split_at(window);
    let (mu1, sd1) = column_stats(lx1, m);
    let (mu2, sd2) = column_stats(lx2, m);
    let mut mcor = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if sd1[i] > 0.0 && sd2[j] > 0.0 {
                let cov = (0..window).map(|k| (lx1[k][i] - mu1[i]) * (lx2[k][j] - mu2[j])).sum::<f64>()
                    / (window as f64 - 1.0);
                mcor[i][j] = cov / (sd1[i] * sd2[j]);
            }
        }
    }
    let self_term = |h: usize| if mcor[h][h] < 0.0 { -mcor[h][h] } else { 0.0 };
    let mut claim = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j && mu2[i] > mu2[j] && mcor[i][j] > 0.0 {
                claim[i][j] = mcor[i][j] + self_term(i) + self_term(j);
            }
        }
    }
    let mut next = w.to_vec();
    for i in 0..m {
        let total: f64 = claim[i].iter().sum();
        if total > 0.0 {
            for j in 0..m {
                let moved = w[i] * claim[i][j] / total;
                next[i] -= moved;
                next[j] += moved;
            }
        }
    }
    let s: f64 = next.iter().map(|v| v.max(0.0)).sum();
    next.iter().map(|v| v.max(0.0) / s).collect()
}
