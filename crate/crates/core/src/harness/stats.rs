use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean of a batch of per-trial values with its 95% Student-t half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub mean: f64,
    /// `NaN` with fewer than two finite values.
    pub half_width: f64,
    /// Number of finite values that entered the estimate.
    pub n: usize,
}

/// Two-sided 95% Student-t critical value with `df` degrees of freedom.
pub fn t_critical(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("df is positive").inverse_cdf(0.975)
}

/// Batch-means interval over the finite entries of `values`. Values are
/// summed in sorted order, so the result does not depend on trial order.
pub fn batch_interval(values: &[f64]) -> Interval {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return Interval { mean: f64::NAN, half_width: f64::NAN, n };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Interval { mean, half_width: f64::NAN, n };
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (n - 1) as f64;
    Interval { mean, half_width: t_critical(n - 1) * (var / n as f64).sqrt(), n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_quantiles() {
        assert!((t_critical(2) - 4.302652729911275).abs() < 1e-9);
        assert!((t_critical(29) - 2.045229642132703).abs() < 1e-9);
    }

    #[test]
    fn small_batches() {
        let i = batch_interval(&[1.0, 2.0, 3.0]);
        assert_eq!(i.mean, 2.0);
        assert!((i.half_width - 4.302652729911275 / 3f64.sqrt()).abs() < 1e-9);
        let one = batch_interval(&[5.0, f64::NAN]);
        assert_eq!((one.mean, one.n), (5.0, 1));
        assert!(one.half_width.is_nan());
        assert!(batch_interval(&[]).mean.is_nan());
    }

    proptest! {
        #[test]
        fn order_free(mut v in prop::collection::vec(0.0f64..1.0, 2..40), seed in any::<u64>()) {
            let a = batch_interval(&v);
            let len = v.len();
            v.rotate_left(seed as usize % len);
            v.reverse();
            prop_assert_eq!(a, batch_interval(&v));
        }
    }
}
