//! Small order-statistics helpers.

/// Linear-interpolation quantile (Hyndman–Fan type 7) of an ascending slice.
///
/// Returns NaN for an empty slice.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Median of an unsorted slice (type-7).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_type7(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_known_values() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 4.0);
        assert_eq!(quantile_type7(&v, 0.5), 2.5);
        assert_eq!(quantile_type7(&v, 0.75), 3.25);
        assert_eq!(quantile_type7(&v, 0.25), 1.75);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
        assert!(quantile_type7(&[], 0.5).is_nan());
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
    }
}
