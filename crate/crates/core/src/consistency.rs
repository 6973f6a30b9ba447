//! Gridded Poisson log-likelihood and the L-test / N-test quantile scores.
//!
//! The likelihood is per-pixel Poisson on counts, including the `-ln ω!`
//! term. Both quantile scores use strict inequality: ties count as "not
//! less". Replicate `j` of a test with stream `s` uses `s.substream(j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};
use statrs::function::factorial::ln_factorial;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::intensity::IntensityField;
use crate::rng::SeededStream;
use crate::sim::simulate_counts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Gamma,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simulation,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileScore {
    pub statistic: Statistic,
    pub value: f64,
    pub n_sims: usize,
    /// Observed log-likelihood (gamma) or observed count (delta).
    pub observed_stat: f64,
    pub method: Method,
    pub seed: Option<u64>,
}

/// Default one-sided level for gamma.
pub const GAMMA_REJECT_BELOW: f64 = 0.05;
/// Acceptance interval for delta: each tail is tested at 5%, which is how
/// over- and under-prediction are flagged in the usual N-test tables.
pub const DELTA_ACCEPT: (f64, f64) = (0.05, 0.95);

impl QuantileScore {
    /// Rejection at the 5% level: gamma < 0.05, or delta outside [0.05, 0.95].
    pub fn rejects_at_5pct(&self) -> bool {
        match self.statistic {
            Statistic::Gamma => self.value < GAMMA_REJECT_BELOW,
            Statistic::Delta => self.value < DELTA_ACCEPT.0 || self.value > DELTA_ACCEPT.1,
        }
    }
}

/// Observed counts per pixel (indexed by pixel). Events outside the active
/// region are not counted.
pub fn pixel_counts(field: &IntensityField, catalog: &Catalog) -> Vec<u64> {
    let grid = field.grid();
    let mut counts = vec![0; grid.n_pixels()];
    for e in catalog.events() {
        if let Some(p) = grid.active_pixel_of(e.lon, e.lat) {
            counts[p] += 1;
        }
    }
    counts
}

/// `Σ_p [ω_p ln Λ_p − Λ_p − ln ω_p!]`; `-inf` when an event falls where `Λ_p = 0`.
pub fn log_likelihood_counts(field: &IntensityField, counts: &[u64]) -> f64 {
    let mut ll = 0.0;
    for p in field.grid().active_pixels() {
        let lambda = field.pixel_integral(p);
        let omega = counts[p];
        if omega == 0 {
            ll -= lambda;
        } else if lambda == 0.0 {
            return f64::NEG_INFINITY;
        } else {
            ll += omega as f64 * lambda.ln() - lambda - ln_factorial(omega);
        }
    }
    ll
}

pub fn log_likelihood(field: &IntensityField, catalog: &Catalog) -> f64 {
    log_likelihood_counts(field, &pixel_counts(field, catalog))
}

fn check_sims(n_sims: usize) -> Result<()> {
    if n_sims == 0 {
        return Err(Error::InvalidArgument("at least one simulation is required".into()));
    }
    Ok(())
}

/// L-test: fraction of simulated log-likelihoods strictly below the observed one.
pub fn l_test(field: &IntensityField, catalog: &Catalog, n_sims: usize, stream: SeededStream) -> Result<QuantileScore> {
    check_sims(n_sims)?;
    let observed = log_likelihood(field, catalog);
    let below: usize = (0..n_sims as u64)
        .into_par_iter()
        .map(|j| usize::from(log_likelihood_counts(field, &simulate_counts(field, stream.substream(j))) < observed))
        .sum();
    Ok(QuantileScore {
        statistic: Statistic::Gamma,
        value: below as f64 / n_sims as f64,
        n_sims,
        observed_stat: observed,
        method: Method::Simulation,
        seed: Some(stream.seed),
    })
}

/// `P(N < n_obs)` for `N ~ Poisson(mean)`.
pub fn poisson_below(mean: f64, n_obs: u64) -> f64 {
    if n_obs == 0 {
        return 0.0;
    }
    if mean <= 0.0 {
        return 1.0;
    }
    Poisson::new(mean).map(|d| d.cdf(n_obs - 1)).unwrap_or(f64::NAN)
}

/// N-test: fraction of simulations with strictly fewer events than observed,
/// or the exact Poisson probability with [`Method::Analytic`].
pub fn n_test(
    field: &IntensityField,
    catalog: &Catalog,
    n_sims: usize,
    stream: SeededStream,
    method: Method,
) -> Result<QuantileScore> {
    let n_obs: u64 = pixel_counts(field, catalog).iter().sum();
    let (value, n_sims, seed) = match method {
        Method::Analytic => (poisson_below(field.total(), n_obs), 0, None),
        Method::Simulation => {
            check_sims(n_sims)?;
            let below: usize = (0..n_sims as u64)
                .into_par_iter()
                .map(|j| usize::from(simulate_counts(field, stream.substream(j)).iter().sum::<u64>() < n_obs))
                .sum();
            (below as f64 / n_sims as f64, n_sims, Some(stream.seed))
        }
    };
    Ok(QuantileScore { statistic: Statistic::Delta, value, n_sims, observed_stat: n_obs as f64, method, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Event;
    use crate::grid::Grid;
    use chrono::{TimeZone, Utc};

    fn events_at(points: &[(f64, f64)]) -> Catalog {
        let t = Utc.with_ymd_and_hms(2007, 1, 1, 0, 0, 0).unwrap();
        Catalog::new(points.iter().map(|&(lon, lat)| Event { time: t, lon, lat, depth: 5.0, magnitude: 4.0 }).collect())
    }

    fn row_field(rates: &[f64]) -> IntensityField {
        let n = rates.len();
        let g = Grid::new(0.0, n as f64, 0.0, 1.0, 1.0, 1.0).unwrap();
        IntensityField::from_rates(g, rates.to_vec()).unwrap()
    }

    #[test]
    fn one_pixel_one_event() {
        let f = row_field(&[1.0]);
        assert!((log_likelihood(&f, &events_at(&[(0.5, 0.5)])) - -1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_catalog() {
        let f = row_field(&[0.5, 2.0, 3.5]);
        assert!((log_likelihood(&f, &Catalog::default()) + f.total()).abs() < 1e-12);
    }

    #[test]
    fn three_pixel_hand_evaluation() {
        let f = row_field(&[0.5, 2.0, 3.5]);
        let cat = events_at(&[(1.5, 0.5), (2.2, 0.1), (2.7, 0.9)]);
        // ω = (0, 1, 2)
        let expected = (-0.5) + (2f64.ln() - 2.0 - 0.0) + (2.0 * 3.5f64.ln() - 3.5 - 2f64.ln());
        assert!((log_likelihood(&f, &cat) - expected).abs() < 1e-12);
    }

    #[test]
    fn event_in_zero_pixel_is_neg_infinity() {
        let f = row_field(&[0.0, 1.0]);
        assert_eq!(log_likelihood(&f, &events_at(&[(0.5, 0.5)])), f64::NEG_INFINITY);
    }

    #[test]
    fn l_test_ties_do_not_count() {
        // Every simulation of a zero field is empty, exactly like the catalog.
        let f = row_field(&[0.0, 0.0]);
        let s = l_test(&f, &Catalog::default(), 50, SeededStream::new(1, 0)).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn n_test_zero_observed() {
        let f = row_field(&[2.0, 3.0]);
        let a = n_test(&f, &Catalog::default(), 0, SeededStream::new(0, 0), Method::Analytic).unwrap();
        assert_eq!(a.value, 0.0);
        let s = n_test(&f, &Catalog::default(), 100, SeededStream::new(0, 0), Method::Simulation).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn analytic_delta_partial_sum() {
        // Oracle: Σ_{n<5} e^{-5} 5^n / n!
        let mut term = (-5.0f64).exp();
        let mut sum = term;
        for n in 1..5 {
            term *= 5.0 / n as f64;
            sum += term;
        }
        let f = row_field(&[2.0, 3.0]);
        let cat = events_at(&[(0.1, 0.1), (0.2, 0.1), (1.1, 0.1), (1.2, 0.2), (1.3, 0.3)]);
        let d = n_test(&f, &cat, 0, SeededStream::new(0, 0), Method::Analytic).unwrap();
        assert!((d.value - sum).abs() < 1e-12, "{} vs {sum}", d.value);
        assert!((sum - 0.440_493_285_065_212_2).abs() < 1e-12);
    }

    #[test]
    fn analytic_delta_monotone_in_total() {
        let cat = events_at(&[(0.5, 0.5); 7]);
        let mut last = 1.0;
        for k in 1..40 {
            let f = row_field(&[0.5 * k as f64]);
            let d = n_test(&f, &cat, 0, SeededStream::new(0, 0), Method::Analytic).unwrap().value;
            assert!(d <= last + 1e-15);
            last = d;
        }
    }

    #[test]
    fn rejection_thresholds() {
        let mk = |statistic, value| QuantileScore {
            statistic,
            value,
            n_sims: 1,
            observed_stat: 0.0,
            method: Method::Simulation,
            seed: None,
        };
        assert!(mk(Statistic::Gamma, 0.008).rejects_at_5pct());
        assert!(!mk(Statistic::Gamma, 0.5).rejects_at_5pct());
        assert!(mk(Statistic::Delta, 0.99).rejects_at_5pct());
        assert!(mk(Statistic::Delta, 0.001).rejects_at_5pct());
        assert!(mk(Statistic::Delta, 0.043).rejects_at_5pct());
        assert!(!mk(Statistic::Delta, 0.5).rejects_at_5pct());
    }
}
