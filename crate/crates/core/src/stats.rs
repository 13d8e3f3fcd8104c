//! Small numeric helpers: compensated summation, moments, quantiles.

/// Neumaier-compensated sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    neumaier_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; zero for a single value.
pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Sample variance with the `n - 1` denominator; zero for a single value.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    neumaier_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

/// Quantile by linear interpolation between order statistics (Hyndman-Fan type 7,
/// the default of R and NumPy): position `h = (n - 1) q` in the sorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1.0, 1e-16, -1.0, 1e-16];
        assert_eq!(neumaier_sum(v), 2e-16);
    }

    #[test]
    fn type7_quantiles_match_numpy() {
        // numpy.quantile([1, 2, 3, 4], [0.25, 0.75]) == [1.75, 3.25]
        let v = [4.0, 1.0, 3.0, 2.0];
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
        assert!((quantile(&v, 0.75) - 3.25).abs() < 1e-15);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
    }

    #[test]
    fn single_value_has_zero_spread() {
        assert_eq!(std_dev(&[2.5]), 0.0);
        assert!((variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
