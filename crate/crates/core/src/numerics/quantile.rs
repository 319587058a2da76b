use crate::error::{domain, Result};

/// Order-statistic quantile: the ⌈p·n⌉-th smallest value, or the minimum at p = 0.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return domain("quantile of an empty list");
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("quantile level {p} outside [0, 1]"));
    }
    let n = values.len();
    // the small offset absorbs representation error in p·n for exact products
    let rank = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    let (_, v, _) = sorted.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    Ok(*v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_cases() {
        assert_eq!(empirical_quantile(&[2.0; 4], 0.95).unwrap(), 2.0);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&ten, 0.95).unwrap(), 10.0);
        assert_eq!(empirical_quantile(&ten, 0.9).unwrap(), 9.0);
        assert_eq!(empirical_quantile(&ten, 0.0).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&ten, 1.0).unwrap(), 10.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn matches_full_sort(values in prop::collection::vec(-1e6f64..1e6, 1000), p in 0.0f64..=1.0) {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let idx = ((p * 1000.0 - 1e-9).ceil() as usize).clamp(1, 1000) - 1;
            prop_assert_eq!(empirical_quantile(&values, p).unwrap(), sorted[idx]);
            prop_assert_eq!(empirical_quantile(&values, 0.9).unwrap(), sorted[899]);
        }
    }
}
