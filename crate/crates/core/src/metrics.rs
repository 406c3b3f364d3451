//! Monte Carlo estimators of the average representation error `D` and the
//! unevenness of representation error `U`.
//!
//! `D` is the mean distance from a uniform random point to its nearest active
//! node, scaled by `sqrt(z)`. `U` is the Gini index of those distances.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{fmt_sig17, ActiveIndex};
use crate::rng;

/// Sample points per independent RNG stream. Fixed so results do not depend
/// on the worker count.
const CHUNK: usize = 8192;

/// Bootstrap resamples behind the standard error of `U`.
pub const BOOTSTRAP_RESAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricEstimate {
    pub value: f64,
    pub samples: usize,
    pub std_error: f64,
    pub seed: u64,
}

/// Nearest-active distances of a batch of sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceSample {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl DistanceSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn parallel_chunks<F>(m: usize, seed: u64, per_chunk: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, usize) -> Vec<f64> + Sync,
{
    let chunks = m.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[rng::TAG_SAMPLE, c as u64]);
            let len = CHUNK.min(m - c * CHUNK);
            per_chunk(&mut rng, len)
        })
        .collect();
    parts.concat()
}

/// Distances from `m` uniform points of the region to their nearest node in
/// `index`.
pub fn sample_nearest_distances(index: &ActiveIndex<'_>, m: usize, seed: u64) -> Result<DistanceSample> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let region = *index.layout().region();
    let values = parallel_chunks(m, seed, |rng, len| {
        (0..len)
            .map(|_| {
                let p = region.sample_point(rng);
                index.nearest(p).map(|(_, d)| d).expect("index is non-empty")
            })
            .collect()
    });
    Ok(DistanceSample { values, seed })
}

/// Distances from `m` uniform points of a disc to its center (one active node
/// at the center of a circular region). Points are drawn by rejection from
/// the bounding square.
pub fn sample_disc_distances(radius: f64, m: usize, seed: u64) -> Result<DistanceSample> {
    if !(radius > 0.0) || m == 0 {
        return Err(Error::InvalidParameter("disc radius and sample size must be positive".into()));
    }
    let values = parallel_chunks(m, seed, |rng, len| {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let x = rng.random_range(-radius..radius);
            let y = rng.random_range(-radius..radius);
            let d = (x * x + y * y).sqrt();
            if d < radius {
                out.push(d);
            }
        }
        out
    });
    Ok(DistanceSample { values, seed })
}

/// `D = mean(distance) * sqrt(z)`, with the plain standard error of the mean.
pub fn avg_rep_error(sample: &DistanceSample, z: f64) -> Result<MetricEstimate> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("density must be positive, got {z}")));
    }
    let m = sample.len();
    if m == 0 {
        return Err(Error::InvalidParameter("empty distance sample".into()));
    }
    let mean = sample.mean();
    let std_error = if m > 1 {
        let var = sample.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        var.sqrt() * z.sqrt() / (m as f64).sqrt()
    } else {
        0.0
    };
    Ok(MetricEstimate { value: mean * z.sqrt(), samples: m, std_error, seed: sample.seed })
}

fn validate_gini_input(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::UndefinedGini("fewer than two values"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("gini input must be finite and non-negative".into()));
    }
    Ok(())
}

/// Gini index of already sorted values:
/// `2 * sum(i * g_i) / (m * sum(g)) - (m + 1) / m` with 1-based ranks.
fn gini_sorted(sorted: &[f64]) -> Result<f64> {
    let m = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedGini("all values are zero"));
    }
    let ranked: f64 = sorted.iter().enumerate().map(|(i, g)| (i + 1) as f64 * g).sum();
    Ok((2.0 * ranked / (m * total) - (m + 1.0) / m).max(0.0))
}

/// Half the relative mean absolute difference, in `O(m log m)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    validate_gini_input(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    gini_sorted(&sorted)
}

/// Gini of the distance sample; standard error by nonparametric bootstrap.
pub fn unevenness(sample: &DistanceSample) -> Result<MetricEstimate> {
    validate_gini_input(&sample.values)?;
    let mut sorted = sample.values.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let value = gini_sorted(&sorted)?;
    let m = sorted.len();

    // A resample is a multiset of sorted positions; its Gini follows from
    // the multiplicities without re-sorting.
    let replicates: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(sample.seed, &[rng::TAG_BOOTSTRAP, b as u64]);
            let mut counts = vec![0u32; m];
            for _ in 0..m {
                counts[rng.random_range(0..m)] += 1;
            }
            let mut below = 0.0f64;
            let mut total = 0.0f64;
            let mut ranked = 0.0f64;
            for (g, &w) in sorted.iter().zip(&counts) {
                if w == 0 {
                    continue;
                }
                let w = w as f64;
                total += w * g;
                ranked += g * (w * below + w * (w + 1.0) / 2.0);
                below += w;
            }
            let mf = m as f64;
            if total == 0.0 {
                0.0
            } else {
                2.0 * ranked / (mf * total) - (mf + 1.0) / mf
            }
        })
        .collect();
    let mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
    let var = replicates.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (replicates.len() - 1) as f64;
    Ok(MetricEstimate { value, samples: m, std_error: var.sqrt(), seed: sample.seed })
}

pub const METRIC_CSV_HEADER: &str = "t,metric,value,std_error,samples,seed";

/// Appends `t,metric,value,std_error,samples,seed` rows.
pub fn write_metric_rows<W: Write>(out: &mut W, t: f64, rows: &[(&str, MetricEstimate)]) -> Result<()> {
    for (name, est) in rows {
        writeln!(
            out,
            "{},{name},{},{},{},{}",
            fmt_sig17(t),
            fmt_sig17(est.value),
            fmt_sig17(est.std_error),
            est.samples,
            est.seed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{place_poisson, Layout, Metric, Point, Region};
    use proptest::prelude::*;

    /// O(m^2) definition: sum |g_i - g_j| / (2 m^2 mean).
    fn gini_pairwise(values: &[f64]) -> f64 {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let mut sum = 0.0;
        for a in values {
            for b in values {
                sum += (a - b).abs();
            }
        }
        sum / (2.0 * m * m * mean)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.5; 10]).unwrap(), 0.0);
        assert!((gini(&[1.0, 2.0, 3.0]).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!((gini_pairwise(&[1.0, 2.0, 3.0]) - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn gini_errors() {
        assert!(matches!(gini(&[1.0]), Err(Error::UndefinedGini(_))));
        assert!(matches!(gini(&[]), Err(Error::UndefinedGini(_))));
        assert!(matches!(gini(&[0.0, 0.0, 0.0]), Err(Error::UndefinedGini(_))));
        assert!(matches!(gini(&[1.0, -1.0]), Err(Error::InvalidParameter(_))));
        let sample = DistanceSample { values: vec![0.0; 5], seed: 0 };
        assert!(unevenness(&sample).is_err());
    }

    #[test]
    fn avg_rep_error_scaling() {
        let sample = DistanceSample { values: vec![0.25, 0.75], seed: 1 };
        let d = avg_rep_error(&sample, 1.0).unwrap();
        assert_eq!(d.value, 0.5);
        assert_eq!(d.samples, 2);
        assert!((d.std_error - (0.125f64).sqrt() / 2f64.sqrt()).abs() < 1e-15);
        assert!(avg_rep_error(&sample, 0.0).is_err());
        // mean 2r/3 at z = 1/(pi r^2)
        let r = 0.3;
        let z = 1.0 / (std::f64::consts::PI * r * r);
        let s = DistanceSample { values: vec![2.0 * r / 3.0; 4], seed: 0 };
        let expected = 2.0 / (3.0 * std::f64::consts::PI.sqrt());
        assert!((avg_rep_error(&s, z).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn dense_active_set_gives_zero_distances() {
        let region = Region::unit_square(Metric::Euclidean);
        let layout = Layout::new(region, vec![Point::new(0.5, 0.5)]).unwrap();
        let index = ActiveIndex::build(&layout, [0]);
        let sample = sample_nearest_distances(&index, 10, 1).unwrap();
        assert!(sample.values.iter().all(|&d| d > 0.0 && d <= 0.5f64.sqrt()));

        // Every sample point carries a node.
        let mut rng = rng::stream(1, &[rng::TAG_SAMPLE, 0]);
        let pts: Vec<Point> = (0..10).map(|_| region.sample_point(&mut rng)).collect();
        let layout = Layout::new(region, pts).unwrap();
        let index = ActiveIndex::build(&layout, 0..10);
        let sample = sample_nearest_distances(&index, 10, 1).unwrap();
        assert!(sample.values.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn sampling_errors() {
        let layout = place_poisson(5, Region::unit_square(Metric::Euclidean), 1);
        let empty = ActiveIndex::build(&layout, std::iter::empty());
        assert!(matches!(sample_nearest_distances(&empty, 10, 0), Err(Error::EmptyGraph)));
        let full = ActiveIndex::build(&layout, 0..5);
        assert!(sample_nearest_distances(&full, 0, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_across_pools() {
        let layout = place_poisson(300, Region::unit_square(Metric::Toroidal), 4);
        let index = ActiveIndex::build(&layout, 0..300);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let s = sample_nearest_distances(&index, 50_000, 99).unwrap();
                    (s.clone(), unevenness(&s).unwrap())
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn disc_sample_reproduces_ideal_bounds() {
        let s = sample_disc_distances(1.0, 400_000, 3).unwrap();
        let z = 1.0 / std::f64::consts::PI;
        let d = avg_rep_error(&s, z).unwrap();
        let u = unevenness(&s).unwrap();
        assert!((d.value - 0.376_126).abs() < 4.0 * d.std_error + 1e-4, "{d:?}");
        assert!((u.value - 0.2).abs() < 4.0 * u.std_error + 1e-4, "{u:?}");
    }

    #[test]
    fn standard_error_shrinks_as_inverse_sqrt() {
        let layout = place_poisson(400, Region::unit_square(Metric::Toroidal), 8);
        let index = ActiveIndex::build(&layout, 0..400);
        let mean_se = |m: usize| {
            let (mut d, mut u) = (0.0, 0.0);
            for seed in 0..6 {
                let s = sample_nearest_distances(&index, m, seed).unwrap();
                d += avg_rep_error(&s, 400.0).unwrap().std_error;
                u += unevenness(&s).unwrap().std_error;
            }
            (d, u)
        };
        let (d_small, u_small) = mean_se(20_000);
        let (d_large, u_large) = mean_se(80_000);
        let (rd, ru) = (d_small / d_large, u_small / u_large);
        assert!((rd / 2.0 - 1.0).abs() < 0.15, "D ratio {rd}");
        assert!((ru / 2.0 - 1.0).abs() < 0.15, "U ratio {ru}");
    }

    #[test]
    fn avg_rep_error_is_scale_free() {
        // Doubling coordinates and quartering z leaves D unchanged.
        let small = place_poisson(500, Region::unit_square(Metric::Toroidal), 6);
        let big_region = Region::new(2.0, 2.0, Metric::Toroidal).unwrap();
        let big = Layout::new(
            big_region,
            small.positions().iter().map(|p| Point::new(2.0 * p.x, 2.0 * p.y)).collect(),
        )
        .unwrap();
        let a = sample_nearest_distances(&ActiveIndex::build(&small, 0..500), 100_000, 5).unwrap();
        let b = sample_nearest_distances(&ActiveIndex::build(&big, 0..500), 100_000, 5).unwrap();
        let da = avg_rep_error(&a, 500.0).unwrap();
        let db = avg_rep_error(&b, 125.0).unwrap();
        assert!((da.value - db.value).abs() < 1e-9, "{} {}", da.value, db.value);
    }

    #[test]
    fn metric_rows_format() {
        let est = MetricEstimate { value: 0.5, samples: 10, std_error: 0.25, seed: 7 };
        let mut buf = Vec::new();
        write_metric_rows(&mut buf, 10.0, &[("D", est)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "10.000000000000000,D,0.50000000000000000,0.25000000000000000,10,7\n");
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise_and_is_scale_free(
            values in prop::collection::vec(0.0..10.0f64, 2..300),
            c in 0.001..1000.0f64,
        ) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let g = gini(&values).unwrap();
            prop_assert!((g - gini_pairwise(&values)).abs() < 1e-12);
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-12);
            prop_assert!((0.0..1.0).contains(&g));
        }
    }
}
