//! Distance-to-centroid distributions and the ρ-density band.
//!
//! The distances of a window's points to its centroid are summarized by a
//! Gaussian fit. The ρ-band `[delta_l, delta_h]` is the equal-tailed interval
//! of that Gaussian carrying probability mass ρ, clamped into `[0, 1]`. When
//! clamping cuts mass off one side, the opposite bound is pushed outward
//! until the band carries ρ again (or reaches the edge of `[0, 1]`).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::metric::{DistanceMetric, NormalizationState};

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_EPS_BAND: f64 = 0.01;

/// Equal-width histogram over `[lo, hi]`.
///
/// Masses are counts divided by the total number of samples offered, so a
/// histogram over a sub-range of the data holds partial mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn unit(samples: &[f64], bins: usize) -> Self {
        Self::over(samples, bins, 0.0, 1.0)
    }

    pub fn over(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let bins = bins.max(1);
        let mut masses = vec![0.0; bins];
        if samples.is_empty() || hi <= lo {
            return Self { lo, hi, masses };
        }
        let width = (hi - lo) / bins as f64;
        let unit = 1.0 / samples.len() as f64;
        for &x in samples {
            if !(lo..=hi).contains(&x) {
                continue;
            }
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            masses[idx] += unit;
        }
        Self { lo, hi, masses }
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Fitted distribution of point-to-centroid distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceDistribution {
    pub samples: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub histogram: Histogram,
    /// Set when the spread is zero and no Gaussian can be fitted.
    pub degenerate: bool,
}

impl DistanceDistribution {
    /// Population mean and standard deviation of the given distances.
    pub fn from_distances(samples: Vec<f64>, bins: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyWindow("distance distribution"));
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n;
        let sigma = var.sqrt();
        let histogram = Histogram::unit(&samples, bins);
        Ok(Self {
            degenerate: sigma == 0.0,
            samples,
            mu,
            sigma,
            histogram,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Distances of every vector to `centroid`, normalized under `norm`.
pub fn distances_to<'a, I>(
    vectors: I,
    centroid: &[f64],
    metric: DistanceMetric,
    norm: &NormalizationState,
) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    vectors
        .into_iter()
        .map(|v| metric.distance(v, centroid, norm))
        .collect()
}

/// Fits the distance distribution of `vectors` around `centroid`.
pub fn fit_distribution<'a, I>(
    vectors: I,
    centroid: &[f64],
    metric: DistanceMetric,
    norm: &NormalizationState,
    bins: usize,
) -> Result<DistanceDistribution>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let d = distances_to(vectors, centroid, metric, norm)?;
    DistanceDistribution::from_distances(d, bins)
}

/// The interval `[delta_l, delta_h]` holding ρ of a window's distance mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoBand {
    pub rho: f64,
    pub delta_l: f64,
    pub delta_h: f64,
}

impl RhoBand {
    pub fn width(&self) -> f64 {
        self.delta_h - self.delta_l
    }

    /// Strict membership, `delta_l < d < delta_h`.
    pub fn contains(&self, d: f64) -> bool {
        in_band(self, d)
    }
}

pub fn in_band(band: &RhoBand, d: f64) -> bool {
    band.delta_l < d && d < band.delta_h
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Computes the ρ-band of a fitted distribution.
pub fn compute_band(dist: &DistanceDistribution, rho: f64, eps_band: f64) -> Result<RhoBand> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    let degenerate = || degenerate_band(dist.mu, rho, eps_band);
    if dist.degenerate || !(dist.sigma > 0.0) {
        return Ok(degenerate());
    }
    if rho == 1.0 {
        return Ok(RhoBand {
            rho,
            delta_l: 0.0,
            delta_h: 1.0,
        });
    }
    let (mu, sigma) = (dist.mu, dist.sigma);
    let n = std_normal();
    let z = n.inverse_cdf(0.5 * (1.0 + rho));
    let mut lo = mu - z * sigma;
    let mut hi = mu + z * sigma;

    if lo < 0.0 && hi > 1.0 {
        lo = 0.0;
        hi = 1.0;
    } else if lo < 0.0 {
        lo = 0.0;
        let target = rho + n.cdf(-mu / sigma);
        hi = if target >= 1.0 {
            1.0
        } else {
            (mu + sigma * n.inverse_cdf(target)).min(1.0)
        };
    } else if hi > 1.0 {
        hi = 1.0;
        let target = n.cdf((1.0 - mu) / sigma) - rho;
        lo = if target <= 0.0 {
            0.0
        } else {
            (mu + sigma * n.inverse_cdf(target)).max(0.0)
        };
    }

    if lo < hi {
        Ok(RhoBand {
            rho,
            delta_l: lo,
            delta_h: hi,
        })
    } else {
        Ok(degenerate())
    }
}

fn degenerate_band(mu: f64, rho: f64, eps: f64) -> RhoBand {
    let eps = if eps > 0.0 { eps } else { DEFAULT_EPS_BAND };
    let mut lo = (mu - eps).max(0.0);
    let mut hi = (mu + eps).min(1.0);
    if lo >= hi {
        // mu sits on an edge with no room; keep a sliver of width eps
        if mu >= 1.0 {
            lo = 1.0 - eps;
            hi = 1.0;
        } else {
            lo = 0.0;
            hi = eps;
        }
    }
    RhoBand {
        rho,
        delta_l: lo,
        delta_h: hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as NormalDist};

    fn dist(mu: f64, sigma: f64) -> DistanceDistribution {
        DistanceDistribution {
            samples: vec![mu],
            mu,
            sigma,
            histogram: Histogram::unit(&[mu], DEFAULT_BINS),
            degenerate: sigma == 0.0,
        }
    }

    /// Standard normal CDF by composite Simpson integration of the density.
    fn phi_oracle(x: f64) -> f64 {
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (a, n) = (0.0, 20_000);
        let h = (x - a) / n as f64;
        let mut s = pdf(a) + pdf(x);
        for i in 1..n {
            let t = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
        }
        0.5 + s * h / 3.0
    }

    /// Inverse of `phi_oracle` by bisection.
    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if phi_oracle(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_oracle_matches_tabulated_value() {
        assert!((quantile_oracle(0.75) - 0.674_489_75).abs() < 1e-7);
    }

    #[test]
    fn all_points_on_centroid_are_degenerate() {
        let c = [1.0, 2.0];
        let pts = [[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let d = fit_distribution(
            pts.iter().map(|p| &p[..]),
            &c,
            DistanceMetric::L2,
            &NormalizationState::with_bound(1.0),
            DEFAULT_BINS,
        )
        .unwrap();
        assert_eq!(d.mu, 0.0);
        assert_eq!(d.sigma, 0.0);
        assert!(d.degenerate);
    }

    #[test]
    fn two_point_population_stats() {
        let d = DistanceDistribution::from_distances(vec![0.2, 0.4], DEFAULT_BINS).unwrap();
        assert!((d.mu - 0.3).abs() < 1e-15);
        assert!((d.sigma - 0.1).abs() < 1e-15);
        assert!((d.histogram.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_point_window_flags_degenerate() {
        let d = DistanceDistribution::from_distances(vec![0.42], DEFAULT_BINS).unwrap();
        assert!(d.degenerate);
        let band = compute_band(&d, 0.5, 0.01).unwrap();
        assert!((band.delta_l - 0.41).abs() < 1e-12);
        assert!((band.delta_h - 0.43).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_fit_recovers_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = NormalDist::new(0.5, 0.1).unwrap();
        let samples: Vec<f64> = std::iter::repeat_with(|| g.sample(&mut rng))
            .filter(|x| (0.0..=1.0).contains(x))
            .take(10_000)
            .collect();
        let d = DistanceDistribution::from_distances(samples, DEFAULT_BINS).unwrap();
        assert!((d.mu - 0.5).abs() < 0.01, "mu {}", d.mu);
        assert!((d.sigma - 0.1).abs() < 0.01, "sigma {}", d.sigma);
        assert!((d.histogram.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn half_mass_band_uses_quartile() {
        let z = quantile_oracle(0.75);
        let band = compute_band(&dist(0.5, 0.1), 0.5, 0.01).unwrap();
        assert!((band.delta_l - (0.5 - z * 0.1)).abs() < 1e-9);
        assert!((band.delta_h - (0.5 + z * 0.1)).abs() < 1e-9);
        assert!((band.delta_l - 0.4326).abs() < 1e-4);
        assert!((band.delta_h - 0.5674).abs() < 1e-4);
    }

    #[test]
    fn full_mass_clamps_to_unit_interval() {
        let band = compute_band(&dist(0.5, 0.1), 1.0, 0.01).unwrap();
        assert_eq!((band.delta_l, band.delta_h), (0.0, 1.0));
        let band = compute_band(&dist(0.5, 0.1), 1.0 - 1e-12, 0.01).unwrap();
        assert_eq!((band.delta_l, band.delta_h), (0.0, 1.0));
    }

    #[test]
    fn clamping_widens_the_opposite_side() {
        // near zero: lower bound clamps, upper bound must restore the mass
        let (mu, sigma, rho) = (0.1, 0.1, 0.8);
        let band = compute_band(&dist(mu, sigma), rho, 0.01).unwrap();
        assert_eq!(band.delta_l, 0.0);
        let mass = phi_oracle((band.delta_h - mu) / sigma) - phi_oracle((0.0 - mu) / sigma);
        assert!((mass - rho).abs() < 1e-6, "mass {mass}");

        let (mu, sigma) = (0.95, 0.04);
        let band = compute_band(&dist(mu, sigma), rho, 0.01).unwrap();
        assert_eq!(band.delta_h, 1.0);
        let mass = phi_oracle((1.0 - mu) / sigma) - phi_oracle((band.delta_l - mu) / sigma);
        assert!((mass - rho).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn invalid_rho_rejected() {
        for rho in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                compute_band(&dist(0.5, 0.1), rho, 0.01),
                Err(Error::InvalidRho(_))
            ));
        }
    }

    #[test]
    fn band_membership_is_strict() {
        let band = RhoBand {
            rho: 0.5,
            delta_l: 0.2,
            delta_h: 0.6,
        };
        assert!(in_band(&band, 0.4));
        assert!(!in_band(&band, 0.2));
        assert!(!in_band(&band, 0.6));
        assert!(!in_band(&band, 0.7));
    }

    #[test]
    fn seventy_percent_band_holds_seventy_percent() {
        // right-skewed, long-tailed distances, like real embedding windows
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = rand_distr::Gamma::<f64>::new(30.0, 0.015).unwrap();
        let samples: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng).min(1.0)).collect();
        let d = DistanceDistribution::from_distances(samples, DEFAULT_BINS).unwrap();
        let band = compute_band(&d, 0.7, 0.01).unwrap();
        let frac = d.samples.iter().filter(|x| band.contains(**x)).count() as f64 / d.len() as f64;
        assert!((frac - 0.7).abs() <= 0.05, "coverage {frac}");
    }

    proptest! {
        #[test]
        fn band_bounds_are_ordered(mu in 0.0f64..=1.0, sigma in 0.0f64..0.5, rho in 0.01f64..=1.0) {
            let band = compute_band(&dist(mu, sigma), rho, 0.01).unwrap();
            prop_assert!(0.0 <= band.delta_l);
            prop_assert!(band.delta_l < band.delta_h);
            prop_assert!(band.delta_h <= 1.0);
        }

        #[test]
        fn unclamped_band_carries_rho(mu in 0.3f64..0.7, sigma in 0.001f64..0.05, rho in 0.05f64..0.95) {
            let band = compute_band(&dist(mu, sigma), rho, 0.01).unwrap();
            let n = std_normal();
            let mass = n.cdf((band.delta_h - mu) / sigma) - n.cdf((band.delta_l - mu) / sigma);
            prop_assert!((mass - rho).abs() < 1e-6);
        }

        #[test]
        fn larger_rho_gives_wider_band(mu in 0.2f64..0.8, sigma in 0.001f64..0.05, r1 in 0.05f64..0.9, dr in 0.001f64..0.09) {
            let a = compute_band(&dist(mu, sigma), r1, 0.01).unwrap();
            let b = compute_band(&dist(mu, sigma), r1 + dr, 0.01).unwrap();
            prop_assert!(b.delta_l <= a.delta_l && a.delta_h <= b.delta_h);
        }

        #[test]
        fn interior_sphere_holds_at_most_complement(mu in 0.0f64..=1.0, sigma in 0.001f64..0.3, rho in 0.05f64..0.99) {
            let band = compute_band(&dist(mu, sigma), rho, 0.01).unwrap();
            let n = std_normal();
            let inner = n.cdf((band.delta_l - mu) / sigma) - n.cdf((0.0 - mu) / sigma);
            prop_assert!(inner <= 1.0 - rho + 1e-9);
        }
    }
}
