//! Summary statistics and the small hypothesis tests used by the reports
//! and the statistical test suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn std_pop(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Pearson chi-square goodness-of-fit p-value against equal cell probabilities.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let k = counts.len();
    if k < 2 {
        return 1.0;
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// Kolmogorov-Smirnov statistic of `samples` against U(0, 1). Sorts in place.
pub fn ks_uniform_statistic(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            (((i + 1) as f64 / n) - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value against U(0, 1) (Stephens' small-sample correction).
pub fn ks_uniform_p(samples: &mut [f64]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let d = ks_uniform_statistic(samples);
    let sqrt_n = (samples.len() as f64).sqrt();
    let t = d * (sqrt_n + 0.12 + 0.11 / sqrt_n);
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Mann-Whitney U counting pairs with `a < b` (ties count one half).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    if x < y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .sum()
}

/// Exact one-sided p-value for "values in `a` tend to be smaller than in `b`",
/// by enumerating every split of the pooled sample. Falls back to the normal
/// approximation above 20 pooled values.
pub fn mann_whitney_less_p(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return 1.0;
    }
    let observed = mann_whitney_u(a, b);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if n + m > 20 {
        let mu = (n * m) as f64 / 2.0;
        let sigma = ((n * m * (n + m + 1)) as f64 / 12.0).sqrt();
        let z = (observed - 0.5 - mu) / sigma;
        return 0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
    }
    let total = pooled.len();
    let (mut at_least, mut count) = (0u64, 0u64);
    let mut chosen = Vec::with_capacity(n);
    enumerate_splits(total, n, 0, &mut chosen, &mut |idx| {
        let mut in_a = vec![false; total];
        for &i in idx {
            in_a[i] = true;
        }
        let ga: Vec<f64> = (0..total).filter(|&i| in_a[i]).map(|i| pooled[i]).collect();
        let gb: Vec<f64> = (0..total).filter(|&i| !in_a[i]).map(|i| pooled[i]).collect();
        count += 1;
        if mann_whitney_u(&ga, &gb) >= observed - 1e-9 {
            at_least += 1;
        }
    });
    at_least as f64 / count as f64
}

fn enumerate_splits(
    total: usize,
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for i in start..total {
        if total - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        enumerate_splits(total, k, i + 1, chosen, visit);
        chosen.pop();
    }
}
