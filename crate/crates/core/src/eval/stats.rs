//! Normality check and two-sample location tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{EvalError, Result};
use crate::numeric::{average_ranks, mean, sample_variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    /// p < 0.05.
    pub significant: bool,
}

impl StatTestResult {
    fn new(test: &str, statistic: f64, p: f64) -> StatTestResult {
        let p_value = p.clamp(0.0, 1.0);
        StatTestResult {
            test: test.to_string(),
            statistic,
            p_value,
            significant: p_value < 0.05,
        }
    }
}

fn need(sample: &[f64], n: usize) -> Result<()> {
    if sample.len() < n {
        return Err(EvalError::TooFewSamples {
            need: n,
            got: sample.len(),
        });
    }
    Ok(())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Asymptotic Kolmogorov survival function `Q(lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov distance to a normal with the sample's own mean and
/// SD, p from the asymptotic distribution with Stephens' small-sample
/// adjustment (no Lilliefors correction).
pub fn ks_normality(sample: &[f64]) -> Result<StatTestResult> {
    need(sample, 5)?;
    let mu = mean(sample);
    let sd = sample_variance(sample).sqrt();
    if !(sd > 0.0) {
        return Err(EvalError::ZeroVariance);
    }
    let dist = Normal::new(mu, sd).map_err(|_| EvalError::ZeroVariance)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok(StatTestResult::new(
        "kolmogorov_smirnov",
        d,
        kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    ))
}

/// Two-sided Welch t-test.
pub fn t_test_unpaired(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    need(a, 3)?;
    need(b, 3)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    let diff = mean(a) - mean(b);
    if se2 == 0.0 {
        if diff == 0.0 {
            return Ok(StatTestResult::new("welch_t", 0.0, 1.0));
        }
        return Err(EvalError::ZeroVariance);
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| EvalError::ZeroVariance)?;
    Ok(StatTestResult::new(
        "welch_t",
        t,
        2.0 * (1.0 - dist.cdf(t.abs())),
    ))
}

/// U statistic of `a`: pairs with `a > b` plus half the tied pairs.
pub fn mann_whitney_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut all = a.to_vec();
    all.extend_from_slice(b);
    let ranks = average_ranks(&all);
    let n1 = a.len() as f64;
    ranks[..a.len()].iter().sum::<f64>() - n1 * (n1 + 1.0) / 2.0
}

/// Two-sided Mann-Whitney U with the normal approximation, tie correction
/// and continuity correction. The reported statistic is U of `a`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    need(a, 3)?;
    need(b, 3)?;
    let u = mann_whitney_statistic(a, b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let mut all = a.to_vec();
    all.extend_from_slice(b);
    all.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < all.len() {
        let j = all[i..].iter().take_while(|v| **v == all[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(StatTestResult::new("mann_whitney_u", u, 1.0));
    }
    let z = ((u - n1 * n2 / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(StatTestResult::new(
        "mann_whitney_u",
        u,
        2.0 * (1.0 - std_normal().cdf(z)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pair_count(a: &[f64], b: &[f64]) -> f64 {
        let mut u = 0.0;
        for x in a {
            for y in b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        u
    }

    #[test]
    fn ks_simulations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_normality(&normal).unwrap().p_value > 0.05);
        let uniform: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        assert!(ks_normality(&uniform).unwrap().p_value < 0.05);
        assert!(matches!(
            ks_normality(&[2.0; 10]),
            Err(EvalError::ZeroVariance)
        ));
        assert!(matches!(
            ks_normality(&[1.0, 2.0]),
            Err(EvalError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 3.0, 2.0, 5.0, 4.0];
        assert!(mann_whitney_u(&a, &a).unwrap().p_value > 0.99);
        assert!(t_test_unpaired(&a, &a).unwrap().p_value > 0.99);
    }

    #[test]
    fn disjoint_samples() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (100..=110).map(f64::from).collect();
        let mw = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(mw.statistic, pair_count(&a, &b));
        assert!(mw.p_value < 0.001);
        assert!(t_test_unpaired(&a, &b).unwrap().p_value < 0.001);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1.3581) is the 5% critical point, Q(1.6276) the 1% point
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn welch_matches_textbook_example() {
        // oracle: t and Welch-Satterthwaite df computed by hand
        let a = [
            27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7,
            21.4,
        ];
        let b = [
            27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5,
            24.4,
        ];
        let r = t_test_unpaired(&a, &b).unwrap();
        assert!((r.statistic + 2.46).abs() < 0.01, "{}", r.statistic);
        assert!((r.p_value - 0.021).abs() < 0.002, "{}", r.p_value);
    }

    proptest! {
        #[test]
        fn u_equals_pair_count(
            a in prop::collection::vec(0u8..8, 1..=12),
            b in prop::collection::vec(0u8..8, 1..=12),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            prop_assert!((mann_whitney_statistic(&a, &b) - pair_count(&a, &b)).abs() < 1e-9);
        }
    }
}
