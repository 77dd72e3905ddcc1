//! Estimators and fits applied to replication output.

use rand::Rng;
use rayon::prelude::*;

use crate::algebra::Mat2;
use crate::error::{Error, Result};
use crate::rng;

/// Observed orders between consecutive rows: entry `k` is
/// `log(e[k-1]/e[k]) / log(p[k-1]/p[k])`, `None` for the first row or
/// when either error is not positive. For a sample-count sweep pass
/// `p = 1/Ns`.
pub fn order_of_accuracy(p: &[f64], e: &[f64]) -> Result<Vec<Option<f64>>> {
    if p.len() != e.len() {
        return Err(Error::config("parameter and error sequences differ in length"));
    }
    if p.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: p.len() });
    }
    let increasing = p.windows(2).all(|w| w[1] > w[0]);
    let decreasing = p.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) || p.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::config("parameters must be positive and strictly monotone"));
    }
    let mut out = vec![None];
    for k in 1..p.len() {
        let (a, b) = (e[k - 1], e[k]);
        let ok = a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite();
        out.push(ok.then(|| (a / b).ln() / (p[k - 1] / p[k]).ln()));
    }
    Ok(out)
}

/// Unbiased variance `N/(N-1) (mean ‖X‖² - ‖mean X‖²)` under the Frobenius
/// norm.
pub fn variance_estimator(samples: &[Mat2]) -> Result<f64> {
    let mut acc = MomentAccumulator::new(1);
    for s in samples {
        acc.push(&[*s]);
    }
    let m = acc.finish()?;
    Ok(m.variance[0])
}

/// Running sums of `X` and `‖X‖²` for a fixed number of slots.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    count: usize,
    sum: Vec<Mat2>,
    sum_sq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: Vec<Mat2>,
    pub variance: Vec<f64>,
    /// Slots whose raw estimate was negative and was set to zero.
    pub clamped: usize,
}

impl MomentAccumulator {
    pub fn new(slots: usize) -> Self {
        MomentAccumulator {
            count: 0,
            sum: vec![Mat2::zero(); slots],
            sum_sq: vec![0.0; slots],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, values: &[Mat2]) {
        debug_assert_eq!(values.len(), self.sum.len());
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(values) {
            *s += *v;
            *q += v.norm_sqr();
        }
        self.count += 1;
    }

    /// Adds another accumulator's sums; merge order fixes the rounding.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += *o;
        }
        for (q, o) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *q += o;
        }
        self.count += other.count;
    }

    pub fn finish(&self) -> Result<Moments> {
        if self.count < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: self.count });
        }
        let n = self.count as f64;
        let mut clamped = 0;
        let mean: Vec<Mat2> = self.sum.iter().map(|s| *s * (1.0 / n)).collect();
        let variance = mean
            .iter()
            .zip(&self.sum_sq)
            .map(|(m, q)| {
                let v = n / (n - 1.0) * (q / n - m.norm_sqr());
                if v < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    v
                }
            })
            .collect();
        Ok(Moments {
            count: self.count,
            mean,
            variance,
            clamped,
        })
    }
}

/// Least-squares polynomial coefficients, lowest degree first.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let cols = degree + 1;
    if x.len() != y.len() {
        return Err(Error::config("x and y differ in length"));
    }
    if x.len() < cols {
        return Err(Error::TooFewSamples { needed: cols, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::config("fit data must be finite"));
    }
    // Householder QR on the Vandermonde matrix, column-major.
    let rows = x.len();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|k| x.iter().map(|v| v.powi(k as i32)).collect()).collect();
    let mut b = y.to_vec();
    for k in 0..cols {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::config("fit abscissae are degenerate"));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|t| t * t).sum();
        for col in a.iter_mut().skip(k).chain(std::iter::once(&mut b)) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vv;
            for (c, p) in col[k..].iter_mut().zip(&v) {
                *c -= f * p;
            }
        }
    }
    let mut coef = vec![0.0; cols];
    for k in (0..cols).rev() {
        let tail: f64 = (k + 1..cols).map(|j| a[j][k] * coef[j]).sum();
        let diag = a[k][k];
        if diag.abs() <= 1e-12 * a[0][0].abs().max(1.0) * rows as f64 {
            return Err(Error::config("fit abscissae are degenerate"));
        }
        coef[k] = (b[k] - tail) / diag;
    }
    Ok(coef)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }
}

/// Percentile bootstrap over `items` resampled with replacement. `stat`
/// receives the resampled indices; the estimate uses all items once.
/// Resamples for which `stat` fails are skipped.
pub fn bootstrap_ci<F>(items: usize, resamples: usize, level: f64, seed: u64, stat: F) -> Result<ConfidenceInterval>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if items < 2 || resamples < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: items.min(resamples) });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config("confidence level must lie in (0, 1)"));
    }
    let all: Vec<usize> = (0..items).collect();
    let estimate = stat(&all)?;
    let mut values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = rng::stream(seed, &[b as u64]);
            let idx: Vec<usize> = (0..items).map(|_| rng.random_range(0..items)).collect();
            stat(&idx).ok().filter(|v| v.is_finite())
        })
        .collect();
    if values.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: values.len() });
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| {
        let pos = q * (values.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        let j = (i + 1).min(values.len() - 1);
        values[i] + frac * (values[j] - values[i])
    };
    Ok(ConfidenceInterval {
        estimate,
        lo: pick(tail),
        hi: pick(1.0 - tail),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::C64;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn orders_of_power_laws() {
        let h = [0.5, 0.25, 0.125];
        let first: Vec<f64> = h.iter().map(|v| 3.0 * v).collect();
        let second: Vec<f64> = h.iter().map(|v| 3.0 * v * v).collect();
        let o1 = order_of_accuracy(&h, &first).unwrap();
        let o2 = order_of_accuracy(&h, &second).unwrap();
        assert_eq!(o1[0], None);
        assert!((o1[1].unwrap() - 1.0).abs() < 1e-12);
        assert!((o2[2].unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_of_reference_pair() {
        let o = order_of_accuracy(&[0.5, 0.25], &[2.1940e-4, 1.0593e-4]).unwrap();
        assert!((o[1].unwrap() - 1.0505).abs() < 5e-4);
    }

    #[test]
    fn sample_count_sweep_uses_inverse() {
        let ns = [100.0, 200.0, 400.0];
        let p: Vec<f64> = ns.iter().map(|v| 1.0 / v).collect();
        let e: Vec<f64> = ns.iter().map(|v| 1.0 / v).collect();
        let o = order_of_accuracy(&p, &e).unwrap();
        assert!((o[2].unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_marks_nonpositive_and_rejects_bad_input() {
        let o = order_of_accuracy(&[1.0, 0.5, 0.25], &[1.0, 0.0, 0.1]).unwrap();
        assert_eq!(o, vec![None, None, None]);
        assert!(order_of_accuracy(&[1.0], &[1.0]).is_err());
        assert!(order_of_accuracy(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(order_of_accuracy(&[1.0, 0.5, 0.7], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn variance_small_cases() {
        assert!(variance_estimator(&[Mat2::identity()]).is_err());
        let v = variance_estimator(&[Mat2::identity(), Mat2::zero()]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let same = vec![Mat2::sigma_y(); 5];
        assert_eq!(variance_estimator(&same).unwrap(), 0.0);
    }

    fn noisy(rng: &mut impl rand::Rng, sigma: f64) -> Mat2 {
        let mut z = || {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(sigma * re, sigma * im)
        };
        Mat2::new(z(), z(), z(), z()) + Mat2::sigma_x()
    }

    #[test]
    fn variance_large_sample_consistency() {
        let sigma = 0.3;
        let mut rng = rng::stream(5, &[]);
        let samples: Vec<Mat2> = (0..100_000).map(|_| noisy(&mut rng, sigma)).collect();
        let v = variance_estimator(&samples).unwrap();
        let truth = 8.0 * sigma * sigma;
        // ‖X - EX‖² is σ²·χ²₈, variance 16σ⁴.
        let stderr = (16.0 * sigma.powi(4) / 1e5).sqrt();
        assert!((v - truth).abs() < 3.0 * stderr, "{v} vs {truth}");
    }

    #[test]
    fn variance_estimator_is_unbiased() {
        let sigma = 0.5;
        let truth = 8.0 * sigma * sigma;
        let mut rng = rng::stream(6, &[]);
        let estimates: Vec<f64> = (0..1000)
            .map(|_| {
                let batch: Vec<Mat2> = (0..3).map(|_| noisy(&mut rng, sigma)).collect();
                variance_estimator(&batch).unwrap()
            })
            .collect();
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - truth).abs() < 5.0 * (var / n).sqrt(), "{mean} vs {truth}");
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let mut rng = rng::stream(9, &[]);
        let data: Vec<[Mat2; 2]> = (0..50).map(|_| [noisy(&mut rng, 1.0), noisy(&mut rng, 2.0)]).collect();
        let mut whole = MomentAccumulator::new(2);
        data.iter().for_each(|d| whole.push(d));
        let mut a = MomentAccumulator::new(2);
        let mut b = MomentAccumulator::new(2);
        data[..20].iter().for_each(|d| a.push(d));
        data[20..].iter().for_each(|d| b.push(d));
        a.merge(&b);
        let (x, y) = (whole.finish().unwrap(), a.finish().unwrap());
        assert_eq!(x.count, y.count);
        for k in 0..2 {
            assert!((x.variance[k] - y.variance[k]).abs() < 1e-12 * x.variance[k]);
        }
    }

    #[test]
    fn clamping_is_counted() {
        let mut acc = MomentAccumulator::new(1);
        let v = Mat2::identity() * 0.1;
        for _ in 0..3 {
            acc.push(&[v]);
        }
        let m = acc.finish().unwrap();
        assert!(m.variance[0] >= 0.0);
        assert!(m.clamped <= 1);
        assert!(m.variance[0] < 1e-15);
    }

    #[test]
    fn polyfit_recovers_quadratic() {
        let x: Vec<f64> = (0..13).map(|n| n as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v + 0.01 * v * v).collect();
        let c = polyfit(&x, &y, 2).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-10);
        assert!((c[1] + 0.5).abs() < 1e-10);
        assert!((c[2] - 0.01).abs() < 1e-12);
        assert!(polyfit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 2).is_err());
        assert!(polyfit(&[1.0, 2.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn bootstrap_covers_mean() {
        let mut rng = rng::stream(11, &[]);
        let data: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ci = bootstrap_ci(data.len(), 400, 0.95, 3, |idx| {
            Ok(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
        })
        .unwrap();
        assert!(ci.lo < ci.estimate && ci.estimate < ci.hi);
        assert!(ci.contains(0.0));
        assert!(ci.hi - ci.lo < 0.3);
    }

    proptest! {
        #[test]
        fn shift_invariance(shift in -3.0f64..3.0, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
            let base = [Mat2::identity() * a, Mat2::sigma_x() * b, Mat2::sigma_z() * c];
            let moved: Vec<Mat2> = base.iter().map(|m| *m + Mat2::sigma_y() * shift).collect();
            let v0 = variance_estimator(&base).unwrap();
            let v1 = variance_estimator(&moved).unwrap();
            prop_assert!((v0 - v1).abs() < 1e-9 * (1.0 + v0));
            prop_assert!(v0 >= 0.0);
        }

        #[test]
        fn power_law_order_exact(c in 0.1f64..10.0, q in 0.5f64..3.0, h0 in 0.05f64..1.0) {
            let p = [h0, h0 / 2.0, h0 / 4.0];
            let e: Vec<f64> = p.iter().map(|h| c * h.powf(q)).collect();
            for o in order_of_accuracy(&p, &e).unwrap().into_iter().skip(1) {
                prop_assert!((o.unwrap() - q).abs() < 1e-9);
            }
        }
    }
}
