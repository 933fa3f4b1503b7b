//! Binomial coefficients and hypergeometric weights.
//!
//! Coefficients are evaluated exactly in `u128` while they fit; larger ones
//! fall back to log space.

/// Exact `C(n, k)`, or `None` on overflow.
pub fn binomial_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Probability that exactly `j` of the `s` items drawn without replacement
/// from a population of `population` come from the `marked` marked ones:
/// `C(marked, j) C(population - marked, s - j) / C(population, s)`.
///
/// Terms with `j > marked` or `s - j > population - marked` are zero.
pub fn hypergeometric_pmf(population: u64, marked: u64, s: u64, j: u64) -> f64 {
    if j > marked || j > s || s > population || s - j > population - marked {
        return 0.0;
    }
    let exact = (
        binomial_exact(marked, j),
        binomial_exact(population - marked, s - j),
        binomial_exact(population, s),
    );
    if let (Some(a), Some(b), Some(c)) = exact {
        return a as f64 * b as f64 / c as f64;
    }
    (ln_binomial(marked, j) + ln_binomial(population - marked, s - j) - ln_binomial(population, s))
        .exp()
}
