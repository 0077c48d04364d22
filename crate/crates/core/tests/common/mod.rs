//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve_dense(a.to_vec(), e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub struct NormalEquations {
    pub beta: Vec<f64>,
    pub xtx_inv: Vec<Vec<f64>>,
    pub resid: Vec<f64>,
}

/// OLS via explicit X'X and X'y.
pub fn normal_equations(y: &[f64], cols: &[Vec<f64>]) -> NormalEquations {
    let p = cols.len();
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|a| cols[a].iter().zip(y).map(|(u, v)| u * v).sum()).collect();
    let beta = solve_dense(xtx.clone(), xty);
    let resid = y
        .iter()
        .enumerate()
        .map(|(i, yi)| yi - (0..p).map(|j| cols[j][i] * beta[j]).sum::<f64>())
        .collect();
    NormalEquations { beta, xtx_inv: invert(&xtx), resid }
}

fn sandwich(bread: &[Vec<f64>], meat: &[Vec<f64>], scale: f64) -> Vec<f64> {
    let p = bread.len();
    (0..p)
        .map(|j| {
            let mut v = 0.0;
            for a in 0..p {
                for b in 0..p {
                    v += bread[j][a] * meat[a][b] * bread[b][j];
                }
            }
            (v * scale).sqrt()
        })
        .collect()
}

/// Cluster-robust standard errors summed cluster by cluster.
pub fn cluster_se(cols: &[Vec<f64>], fit: &NormalEquations, labels: &[&str], k: usize) -> Vec<f64> {
    let p = cols.len();
    let n = labels.len();
    let mut groups: Vec<&str> = labels.to_vec();
    groups.sort();
    groups.dedup();
    let mut meat = vec![vec![0.0; p]; p];
    for g in &groups {
        let score: Vec<f64> = (0..p)
            .map(|j| (0..n).filter(|&i| labels[i] == *g).map(|i| cols[j][i] * fit.resid[i]).sum())
            .collect();
        for a in 0..p {
            for b in 0..p {
                meat[a][b] += score[a] * score[b];
            }
        }
    }
    let (g, nf, kf) = (groups.len() as f64, n as f64, k as f64);
    sandwich(&fit.xtx_inv, &meat, g / (g - 1.0) * (nf - 1.0) / (nf - kf))
}

pub fn hc1_se(cols: &[Vec<f64>], fit: &NormalEquations, k: usize) -> Vec<f64> {
    let p = cols.len();
    let n = fit.resid.len();
    let mut meat = vec![vec![0.0; p]; p];
    for i in 0..n {
        for a in 0..p {
            for b in 0..p {
                meat[a][b] += cols[a][i] * cols[b][i] * fit.resid[i].powi(2);
            }
        }
    }
    sandwich(&fit.xtx_inv, &meat, n as f64 / (n - k) as f64)
}

/// Rank = (# strictly smaller) + (# equal + 1) / 2.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let eq = v.iter().filter(|b| *b == a).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    naive_pearson(&naive_ranks(x), &naive_ranks(y))
}

/// Hand-rolled linear interpolation between order statistics (h = (n-1)p).
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One DMU: inputs, desirable outputs, undesirable outputs.
pub type Dmu = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Slacks-based score with bad outputs for a fixed VRS combination `lam`,
/// or `None` when `lam` does not dominate DMU `o`.
pub fn sbm_und_at(dmus: &[Dmu], o: usize, lam: &[f64]) -> Option<f64> {
    let (x0, g0, b0) = &dmus[o];
    let comb = |pick: fn(&Dmu) -> &Vec<f64>, k: usize| -> f64 {
        dmus.iter().zip(lam).map(|(d, l)| pick(d)[k] * l).sum()
    };
    let mut input = 0.0;
    for (i, x) in x0.iter().enumerate() {
        let s = x - comb(|d| &d.0, i);
        if s < -1e-12 {
            return None;
        }
        input += s.max(0.0) / x;
    }
    let mut output = 0.0;
    for (r, y) in g0.iter().enumerate() {
        let s = comb(|d| &d.1, r) - y;
        if s < -1e-12 {
            return None;
        }
        output += s.max(0.0) / y;
    }
    for (r, y) in b0.iter().enumerate() {
        let s = y - comb(|d| &d.2, r);
        if s < -1e-12 {
            return None;
        }
        output += s.max(0.0) / y;
    }
    let m = x0.len() as f64;
    let outs = (g0.len() + b0.len()) as f64;
    Some((1.0 - input / m) / (1.0 + output / outs))
}

/// Grid search over the 2-simplex of λ for a 3-DMU VRS instance.
pub fn sbm_und_grid3(dmus: &[Dmu], o: usize, step: f64) -> f64 {
    assert_eq!(dmus.len(), 3);
    let k = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    for a in 0..=k {
        for b in 0..=k - a {
            let l0 = a as f64 / k as f64;
            let l1 = b as f64 / k as f64;
            let lam = [l0, l1, (1.0 - l0 - l1).max(0.0)];
            if let Some(v) = sbm_und_at(dmus, o, &lam) {
                best = best.min(v);
            }
        }
    }
    best
}

/// A cross-section drawn from a known translog with a normal/half-normal error.
pub struct FrontierSample {
    pub design: frontier::sfa::FrontierDesign,
    pub beta: Vec<f64>,
    pub true_efficiency: Vec<f64>,
}

/// `n` observations over six lognormal regressors; beta is the default
/// translog without its trend term.
pub fn frontier_sample(n: usize, gamma: f64, sigma_sq: f64, seed: u64) -> FrontierSample {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::<f64>::new(0.0, 1.0).unwrap();
    let raw: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..n).map(|_| (0.6 * z.sample(&mut rng)).exp()).collect())
        .collect();
    let base: Vec<&str> = frontier::sfa::BASE_VARIABLES.iter().map(|b| b.0).collect();
    let (rows, names) = frontier::sfa::translog_rows_named(&base, &raw, None);
    let mut beta = frontier::panel::default_frontier_beta();
    beta.truncate(names.len());
    let (su, sv) = ((gamma * sigma_sq).sqrt(), ((1.0 - gamma) * sigma_sq).sqrt());
    let mut y = Vec::with_capacity(n);
    let mut eff = Vec::with_capacity(n);
    for row in &rows {
        let u = (su * z.sample(&mut rng)).abs();
        let v = sv * z.sample(&mut rng);
        y.push(row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + v - u);
        eff.push((-u).exp());
    }
    let keys = (0..n)
        .map(|i| frontier::panel::ObsKey { bank_id: format!("S{i:04}"), year: 2000 })
        .collect();
    let design = frontier::sfa::FrontierDesign::new(y, &rows, names, 0.0, keys).unwrap();
    FrontierSample { design, beta, true_efficiency: eff }
}
