//! Small numeric helpers shared by the estimators and the diagnostics.

/// Binary entropy in nats, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }
}

/// Bernoulli KL divergence `D(p‖q)` in nats; infinite when `q` misses support of `p`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a <= 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            out[k] = rank;
        }
        start = end;
    }
    out
}

/// Pearson correlation; `NaN` when either sample is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// `Binomial(n, q)` pmf over `0..=n`.
pub fn binomial_pmf(n: usize, q: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if q <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if q >= 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    let mut coeff = 1.0;
    for (k, slot) in pmf.iter_mut().enumerate() {
        if k > 0 {
            coeff *= (n - k + 1) as f64 / k as f64;
        }
        *slot = coeff * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32);
    }
    pmf
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(3.0 * binary_entropy(0.1), 0.975, epsilon = 5e-4);
    }

    #[test]
    fn spearman_ties_and_sign() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]), -1.0, epsilon = 1e-12);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn binomial_sums_to_one() {
        for &q in &[0.0, 0.2, 0.3679, 1.0] {
            let s: f64 = binomial_pmf(5, q).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(binomial_pmf(2, 0.5)[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kl_basics() {
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
        assert!(bernoulli_kl(0.3, 0.0).is_infinite());
        assert_eq!(bernoulli_kl(0.0, 0.0), 0.0);
    }
}
