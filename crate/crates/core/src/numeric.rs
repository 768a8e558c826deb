//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. Error grows with log(n) instead of n,
/// which keeps hour-long accumulations well inside 1e-12 relative error
/// without resorting to compensated summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Arithmetic mean via pairwise summation. NaN if empty.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Mean of the squared elements. NaN if empty.
pub fn mean_sq(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    const BLOCK: usize = 64;
    fn go(xs: &[f64]) -> f64 {
        if xs.len() <= BLOCK {
            return xs.iter().map(|x| x * x).sum();
        }
        let mid = xs.len() / 2;
        go(&xs[..mid]) + go(&xs[mid..])
    }
    go(xs) / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 55.0);
    }

    #[test]
    fn pairwise_is_accurate_on_long_cancelling_input() {
        // 10^6 alternating large/small terms; compare against Kahan.
        let xs: Vec<f64> = (0..1_000_000)
            .map(|i| if i % 2 == 0 { 1.0 + 1e-12 * i as f64 } else { -1.0 })
            .collect();
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for &x in &xs {
            let y = x - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        assert!((pairwise_sum(&xs) - sum).abs() <= 1e-9 * sum.abs().max(1.0));
    }

    #[test]
    fn mean_of_empty_is_nan() {
        assert!(mean(&[]).is_nan());
        assert!(mean_sq(&[]).is_nan());
    }

    #[test]
    fn mean_sq_squares_before_averaging() {
        assert_eq!(mean_sq(&[3.0, 4.0]), 12.5);
    }
}
