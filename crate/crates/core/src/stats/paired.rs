use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::StatsError;

pub const DEFAULT_RESAMPLES: usize = 10_000;
/// Largest non-zero sample size for which the signed-rank p is exact.
pub const WILCOXON_EXACT_MAX: usize = 12;

/// Holm step-down adjustment. Output is in input order.
pub fn holm(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::PValueOutOfRange(*p));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| p_values[*a].total_cmp(&p_values[*b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[i]).min(1.0);
        running = running.max(scaled);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Midranks of `values` (1-based), ties sharing the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// One-sided p for a positive shift.
    pub p: f64,
    pub n_nonzero: usize,
    pub exact: bool,
}

/// Signed-rank test of `H1: median(delta) > 0`. Zeros are dropped, ties get
/// midranks. For up to twelve non-zero values the p is exact under the
/// observed rank pattern; above that a normal approximation with continuity
/// and tie correction is used.
pub fn wilcoxon_signed_rank(deltas: &[f64]) -> WilcoxonResult {
    let nz: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return WilcoxonResult {
            w_plus: 0.0,
            p: 1.0,
            n_nonzero: 0,
            exact: true,
        };
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= WILCOXON_EXACT_MAX {
        // doubled ranks are integers even with midranks
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (w_plus * 2.0).round() as usize;
        let at_least: u64 = counts[observed..].iter().sum();
        return WilcoxonResult {
            w_plus,
            p: at_least as f64 / (1u64 << n) as f64,
            n_nonzero: n,
            exact: true,
        };
    }

    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p = if var <= 0.0 {
        if w_plus > mu { 0.0 } else { 1.0 }
    } else {
        let z = (w_plus - mu - 0.5) / var.sqrt();
        Normal::standard().sf(z)
    };
    WilcoxonResult {
        w_plus,
        p,
        n_nonzero: n,
        exact: false,
    }
}

/// Percentile interval for the mean of `deltas`. Resample `b` draws from
/// its own ChaCha stream, so results do not depend on thread scheduling.
pub fn bootstrap_mean_ci(deltas: &[f64], resamples: usize, seed: u64, level: f64) -> (f64, f64) {
    let n = deltas.len();
    let mut means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += deltas[rng.random_range(0..n)];
            }
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile(&means, alpha), quantile(&means, 1.0 - alpha))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub mean_delta: f64,
    pub t: f64,
    pub df: f64,
    pub p_one_sided: f64,
    pub wilcoxon_stat: f64,
    pub wilcoxon_p: f64,
    pub wilcoxon_exact: bool,
    /// Undefined when the deltas have zero variance.
    pub cohens_dz: Option<f64>,
    pub ci95: (f64, f64),
    /// Holm-adjusted t-test p within the family it was reported with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_holm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wilcoxon_p_holm: Option<f64>,
    /// The deltas had zero variance, so t is infinite (or zero when every
    /// delta is zero) and d_z is undefined.
    pub zero_variance: bool,
}

/// Paired comparison of `orig` against `pert` per seed, with
/// `H1: orig > pert`.
pub fn paired_tests(orig: &[f64], pert: &[f64], resamples: usize, seed: u64) -> Result<PairedTestResult, StatsError> {
    if orig.len() != pert.len() {
        return Err(StatsError::LengthMismatch(orig.len(), pert.len()));
    }
    let n = orig.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    if orig.iter().chain(pert).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let deltas: Vec<f64> = orig.iter().zip(pert).map(|(a, b)| a - b).collect();
    let m = mean(&deltas);
    let sd = sample_sd(&deltas);
    let df = (n - 1) as f64;
    // a spread far below rounding noise of the mean counts as none
    let zero_variance = sd <= 1e-12 * m.abs().max(f64::MIN_POSITIVE) || sd == 0.0;
    let (t, p) = if zero_variance {
        if m > 0.0 {
            (f64::INFINITY, 0.0)
        } else if m < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let t = m / (sd / (n as f64).sqrt());
        (t, StudentsT::new(0.0, 1.0, df).expect("df >= 1").sf(t))
    };
    let w = wilcoxon_signed_rank(&deltas);
    let (lo, hi) = bootstrap_mean_ci(&deltas, resamples.max(1), seed, 0.95);
    Ok(PairedTestResult {
        n,
        mean_delta: m,
        t,
        df,
        p_one_sided: p,
        wilcoxon_stat: w.w_plus,
        wilcoxon_p: w.p,
        wilcoxon_exact: w.exact,
        cohens_dz: (!zero_variance).then(|| m / sd),
        ci95: (lo, hi),
        p_holm: None,
        wilcoxon_p_holm: None,
        zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn holm_examples() {
        let a = holm(&[0.01, 0.04, 0.03]).unwrap();
        for (x, y) in a.iter().zip([0.03, 0.06, 0.06]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(holm(&[0.2]).unwrap(), vec![0.2]);
        let b = holm(&[0.02, 0.02, 0.02]).unwrap();
        assert!(b.iter().all(|x| (x - 0.06).abs() < 1e-12));
        assert_eq!(holm(&[0.004, 0.6]).unwrap(), vec![0.008, 0.6]);
        assert!(matches!(holm(&[1.5]), Err(StatsError::PValueOutOfRange(_))));
        assert!(holm(&[]).unwrap().is_empty());
    }

    #[test]
    fn wilcoxon_all_positive_five() {
        let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(w.p, 1.0 / 32.0);
        assert_eq!(w.w_plus, 15.0);
        assert!(w.exact);
    }

    #[test]
    fn wilcoxon_constant_positive_is_minimal() {
        let w = wilcoxon_signed_rank(&[0.3; 10]);
        assert_eq!(w.p, 1.0 / 1024.0);
    }

    #[test]
    fn wilcoxon_normal_branch() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let w = wilcoxon_signed_rank(&d);
        assert!(!w.exact);
        assert!(w.p < 1e-3);
        let mixed: Vec<f64> = (1..=20).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        let w = wilcoxon_signed_rank(&mixed);
        assert!(w.p > 0.3 && w.p < 0.7);
    }

    #[test]
    fn constant_positive_deltas() {
        let orig = [0.5; 6];
        let pert = [0.4; 6];
        let r = paired_tests(&orig, &pert, 200, 1).unwrap();
        assert!(r.zero_variance);
        assert_eq!(r.t, f64::INFINITY);
        assert_eq!(r.p_one_sided, 0.0);
        assert_eq!(r.cohens_dz, None);
        assert_eq!(r.wilcoxon_p, 1.0 / 64.0);
    }

    #[test]
    fn symmetric_deltas() {
        let r = paired_tests(&[1.0, 0.0], &[0.0, 1.0], 200, 1).unwrap();
        assert_eq!(r.mean_delta, 0.0);
        assert_eq!(r.cohens_dz, Some(0.0));
        assert!((r.p_one_sided - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_series() {
        let x = [0.3, 0.4, 0.5];
        let r = paired_tests(&x, &x, 100, 0).unwrap();
        assert_eq!((r.t, r.p_one_sided, r.wilcoxon_p), (0.0, 1.0, 1.0));
        assert_eq!(r.ci95, (0.0, 0.0));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(paired_tests(&[1.0], &[1.0], 10, 0), Err(StatsError::TooFewPairs(1))));
        assert!(matches!(
            paired_tests(&[1.0, 2.0], &[1.0], 10, 0),
            Err(StatsError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn t_matches_reference_value() {
        // deltas 1,2,3,4: mean 2.5, sd 1.2910, t = 3.8730 on 3 df
        let r = paired_tests(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], 100, 0).unwrap();
        assert!((r.t - 3.872983346207417).abs() < 1e-12);
        // upper tail of t(3) at 3.873, tabulated 0.015225
        assert!((r.p_one_sided - 0.015225).abs() < 1e-5);
        assert!((r.cohens_dz.unwrap() - 2.5 / 1.2909944487358056).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_is_deterministic_and_brackets_mean() {
        let d = [0.1, -0.2, 0.3, 0.05, 0.0, 0.4, -0.1];
        let a = bootstrap_mean_ci(&d, 5000, 42, 0.95);
        assert_eq!(a, bootstrap_mean_ci(&d, 5000, 42, 0.95));
        assert_ne!(a, bootstrap_mean_ci(&d, 5000, 43, 0.95));
        let m = mean(&d);
        assert!(a.0 <= m && m <= a.1);
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn holm_is_monotone_and_dominates(p in prop::collection::vec(0.0f64..=1.0, 1..12)) {
            let adj = holm(&p).unwrap();
            let mut pairs: Vec<_> = p.iter().zip(&adj).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            for (raw, a) in p.iter().zip(&adj) {
                prop_assert!(a >= raw && *a <= 1.0);
            }
        }
    }
}
