//! Air-to-ground uplink model.
//!
//! Log-distance path loss with log-normal shadowing whose parameters depend on
//! whether the link is line-of-sight, a logistic LoS probability in the
//! elevation angle, the resulting average packet error rate (exact when a
//! packet is lost iff the SNR falls below the threshold), and a two-parameter
//! logistic approximation of that PER used by the planners.
//!
//! Angles inside both logistic models are in degrees. Logarithms are natural.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Position;

/// Linear-scale radio constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    /// Average channel gain at 1 m.
    pub beta_los: f64,
    pub beta_nlos: f64,
    /// Path-loss exponents.
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// Shadowing standard deviation of ln(SNR).
    pub sigma_los: f64,
    pub sigma_nlos: f64,
    /// LoS probability coefficients, rho = 1 / (1 + exp(-a1 * theta + a2)).
    pub los_a1: f64,
    pub los_a2: f64,
    /// Device transmit power, watts.
    pub tx_power: f64,
    /// Noise power, watts.
    pub noise: f64,
    /// Decoding threshold on the instantaneous SNR.
    pub snr_threshold: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationFile::default()
            .to_params(10.0)
            .expect("default propagation is valid")
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// The `propagation` block of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationFile {
    pub beta_los_db: f64,
    pub beta_nlos_db: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub sigma_los: f64,
    pub sigma_nlos: f64,
    pub los_a1: f64,
    pub los_a2: f64,
    pub tx_power_db: f64,
    pub noise_db: f64,
}

impl Default for PropagationFile {
    fn default() -> Self {
        Self {
            beta_los_db: -5.0,
            beta_nlos_db: -15.0,
            alpha_los: 2.2,
            alpha_nlos: 3.0,
            sigma_los: 1.0,
            sigma_nlos: 2.0,
            los_a1: 0.3,
            los_a2: 5.0,
            tx_power_db: -20.0,
            noise_db: -95.0,
        }
    }
}

impl PropagationFile {
    pub(crate) fn to_params(&self, snr_threshold: f64) -> Result<PropagationParams> {
        let check = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::invalid(format!("propagation.{key}"), "must be finite"))
            }
        };
        let p = PropagationParams {
            beta_los: db_to_linear(check("beta_los_db", self.beta_los_db)?),
            beta_nlos: db_to_linear(check("beta_nlos_db", self.beta_nlos_db)?),
            alpha_los: check("alpha_los", self.alpha_los)?,
            alpha_nlos: check("alpha_nlos", self.alpha_nlos)?,
            sigma_los: check("sigma_los", self.sigma_los)?,
            sigma_nlos: check("sigma_nlos", self.sigma_nlos)?,
            los_a1: check("los_a1", self.los_a1)?,
            los_a2: check("los_a2", self.los_a2)?,
            tx_power: db_to_linear(check("tx_power_db", self.tx_power_db)?),
            noise: db_to_linear(check("noise_db", self.noise_db)?),
            snr_threshold,
        };
        if p.alpha_los <= 0.0 {
            return Err(Error::invalid("propagation.alpha_los", "must be > 0"));
        }
        if p.alpha_nlos < p.alpha_los {
            return Err(Error::invalid(
                "propagation.alpha_nlos",
                "must be >= alpha_los",
            ));
        }
        if p.sigma_los <= 0.0 {
            return Err(Error::invalid("propagation.sigma_los", "must be > 0"));
        }
        if p.sigma_nlos <= 0.0 {
            return Err(Error::invalid("propagation.sigma_nlos", "must be > 0"));
        }
        if p.los_a1 <= 0.0 {
            return Err(Error::invalid("propagation.los_a1", "must be > 0"));
        }
        Ok(p)
    }

    pub(crate) fn from_params(p: &PropagationParams) -> Self {
        Self {
            beta_los_db: linear_to_db(p.beta_los),
            beta_nlos_db: linear_to_db(p.beta_nlos),
            alpha_los: p.alpha_los,
            alpha_nlos: p.alpha_nlos,
            sigma_los: p.sigma_los,
            sigma_nlos: p.sigma_nlos,
            los_a1: p.los_a1,
            los_a2: p.los_a2,
            tx_power_db: linear_to_db(p.tx_power),
            noise_db: linear_to_db(p.noise),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Los,
    Nlos,
}

impl PropagationParams {
    fn segment(&self, s: Segment) -> (f64, f64, f64) {
        match s {
            Segment::Los => (self.beta_los, self.alpha_los, self.sigma_los),
            Segment::Nlos => (self.beta_nlos, self.alpha_nlos, self.sigma_nlos),
        }
    }

    pub fn sigma(&self, s: Segment) -> f64 {
        self.segment(s).2
    }
}

/// Elevation angle in degrees for a given horizontal distance.
pub fn elevation_from_distance(altitude: f64, horizontal: f64) -> f64 {
    altitude.atan2(horizontal).to_degrees()
}

/// Elevation angle in degrees of the UAV seen from a ground device.
/// Exactly 90 when the UAV is overhead.
pub fn elevation_angle(uav: &Position, altitude: f64, dev: &Position) -> f64 {
    elevation_from_distance(altitude, uav.distance(dev))
}

pub fn los_probability(theta_deg: f64, p: &PropagationParams) -> f64 {
    1.0 / (1.0 + (-p.los_a1 * theta_deg + p.los_a2).exp())
}

/// Mean of ln(SNR) at 3-D distance `d` on segment `s`.
pub fn snr_log_mean(d: f64, s: Segment, p: &PropagationParams) -> f64 {
    let (beta, alpha, _) = p.segment(s);
    (p.tx_power * beta / p.noise).ln() - alpha * d.ln()
}

/// P(SNR < threshold) for a log-normal SNR with log-mean `mu` and log-std `sigma`.
pub fn phi_cdf(threshold: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf((threshold.ln() - mu) / (sigma * std::f64::consts::SQRT_2)))
}

/// Components of the average PER at one geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerBreakdown {
    pub elevation_deg: f64,
    pub los_probability: f64,
    pub phi_los: f64,
    pub phi_nlos: f64,
    pub per: f64,
}

pub fn per_breakdown(horizontal: f64, altitude: f64, p: &PropagationParams) -> PerBreakdown {
    let theta = elevation_from_distance(altitude, horizontal);
    let rho = los_probability(theta, p);
    let d = horizontal.hypot(altitude);
    let phi_los = phi_cdf(
        p.snr_threshold,
        snr_log_mean(d, Segment::Los, p),
        p.sigma_los,
    );
    let phi_nlos = phi_cdf(
        p.snr_threshold,
        snr_log_mean(d, Segment::Nlos, p),
        p.sigma_nlos,
    );
    PerBreakdown {
        elevation_deg: theta,
        los_probability: rho,
        phi_los,
        phi_nlos,
        per: rho * phi_los + (1.0 - rho) * phi_nlos,
    }
}

/// Average uplink PER bound as a function of horizontal distance.
pub fn per_at_distance(horizontal: f64, altitude: f64, p: &PropagationParams) -> f64 {
    per_breakdown(horizontal, altitude, p).per
}

/// Average uplink PER bound between a device and the UAV at `altitude`.
pub fn per_upper_bound(uav: &Position, dev: &Position, altitude: f64, p: &PropagationParams) -> f64 {
    per_at_distance(uav.distance(dev), altitude, p)
}

/// Logistic approximation q~(theta) = 1 / (1 + exp(b1 * theta + b2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticPerFit {
    pub b1: f64,
    pub b2: f64,
    /// Elevation range (degrees) covered by the fitting samples.
    pub fit_domain: (f64, f64),
    /// Largest |q~ - q| over the fitting samples.
    pub max_abs_error: f64,
}

impl LogisticPerFit {
    /// A fit with no recorded domain, e.g. for hand-picked coefficients.
    pub fn from_coefficients(b1: f64, b2: f64) -> Self {
        Self {
            b1,
            b2,
            fit_domain: (0.0, 90.0),
            max_abs_error: 0.0,
        }
    }

    pub fn approx_per(&self, theta_deg: f64) -> f64 {
        approx_per(theta_deg, self)
    }
}

pub fn approx_per(theta_deg: f64, fit: &LogisticPerFit) -> f64 {
    1.0 / (1.0 + (fit.b1 * theta_deg + fit.b2).exp())
}

const FIT_CLAMP: f64 = 1e-6;

/// Fits (b1, b2) to samples (theta, q).
///
/// Linear regression of ln((1-q)/q) on theta with q clamped to
/// [1e-6, 1-1e-6]. Each sample is weighted by (q(1-q))^2, the squared slope
/// of the logistic at that point, so residuals are measured on the
/// probability scale to first order rather than dominated by saturated
/// samples.
pub fn fit_logistic_samples(thetas: &[f64], qs: &[f64]) -> Result<(f64, f64)> {
    if thetas.len() != qs.len() || thetas.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need matching sample vectors of length >= 2, got {} and {}",
            thetas.len(),
            qs.len()
        )));
    }
    let clamped: Vec<f64> = qs
        .iter()
        .map(|q| q.clamp(FIT_CLAMP, 1.0 - FIT_CLAMP))
        .collect();
    if clamped.iter().all(|&q| q == clamped[0]) {
        return Err(Error::DegenerateFit(
            "all PER samples are equal after clamping".into(),
        ));
    }
    let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &q) in thetas.iter().zip(&clamped) {
        let w = (q * (1.0 - q)).powi(2);
        let y = ((1.0 - q) / q).ln();
        sw += w;
        swx += w * t;
        swxx += w * t * t;
        swy += w * y;
        swxy += w * t * y;
    }
    let det = sw * swxx - swx * swx;
    if !(det.is_finite() && det > 1e-12 * sw * swxx.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateFit(
            "samples do not span a range of elevation angles".into(),
        ));
    }
    let b1 = (sw * swxy - swx * swy) / det;
    let b2 = (swy - b1 * swx) / sw;
    Ok((b1, b2))
}

/// Fits the logistic PER model to the exact average PER sampled at the given
/// horizontal distances.
pub fn fit_logistic_per(p: &PropagationParams, altitude: f64, distances: &[f64]) -> Result<LogisticPerFit> {
    if distances.len() < 20 {
        return Err(Error::DegenerateFit(format!(
            "need at least 20 grid points, got {}",
            distances.len()
        )));
    }
    let thetas: Vec<f64> = distances
        .iter()
        .map(|&d| elevation_from_distance(altitude, d))
        .collect();
    let qs: Vec<f64> = distances
        .iter()
        .map(|&d| per_at_distance(d, altitude, p))
        .collect();
    let (b1, b2) = fit_logistic_samples(&thetas, &qs)?;
    if b1 <= 0.0 {
        return Err(Error::DegenerateFit(format!(
            "fitted slope b1 = {b1} is not positive; PER does not fall with elevation"
        )));
    }
    let mut fit = LogisticPerFit {
        b1,
        b2,
        fit_domain: thetas
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            }),
        max_abs_error: 0.0,
    };
    fit.max_abs_error = thetas
        .iter()
        .zip(&qs)
        .map(|(&t, &q)| (approx_per(t, &fit) - q).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// `n` evenly spaced distances on [0, max_distance].
pub fn distance_grid(max_distance: f64, n: usize) -> Vec<f64> {
    let last = (n.max(2) - 1) as f64;
    (0..n.max(2)).map(|i| max_distance * i as f64 / last).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkSample {
    pub success: bool,
    pub segment: Segment,
    pub snr: f64,
}

/// Draws one uplink attempt: the segment with the LoS probability, then a
/// log-normal SNR. The update is decoded iff the SNR reaches the threshold.
pub fn sample_uplink<R: Rng + ?Sized>(
    uav: &Position,
    dev: &Position,
    altitude: f64,
    p: &PropagationParams,
    rng: &mut R,
) -> UplinkSample {
    let horizontal = uav.distance(dev);
    let rho = los_probability(elevation_from_distance(altitude, horizontal), p);
    let segment = if rng.random::<f64>() < rho {
        Segment::Los
    } else {
        Segment::Nlos
    };
    sample_uplink_on(segment, horizontal.hypot(altitude), p, rng)
}

/// Uplink attempt with the segment already decided.
pub fn sample_uplink_on<R: Rng + ?Sized>(
    segment: Segment,
    distance: f64,
    p: &PropagationParams,
    rng: &mut R,
) -> UplinkSample {
    let z: f64 = rng.sample(StandardNormal);
    let log_snr = snr_log_mean(distance, segment, p) + p.sigma(segment) * z;
    UplinkSample {
        success: log_snr >= p.snr_threshold.ln(),
        segment,
        snr: log_snr.exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn elevation_examples() {
        let h = 60.0;
        let dev = Position::new(100.0, 200.0);
        assert_eq!(elevation_angle(&dev, h, &dev), 90.0);
        assert!(close(elevation_from_distance(h, 60.0), 45.0, 1e-12));
        // arctan(60 / 1131.37) in degrees; table value 3.0357
        let diag = 800.0 * std::f64::consts::SQRT_2;
        assert!(close(elevation_from_distance(h, diag), 3.0357, 1e-4));
    }

    #[test]
    fn los_probability_examples() {
        let p = PropagationParams::default();
        assert!(close(los_probability(p.los_a2 / p.los_a1, &p), 0.5, 1e-15));
        assert!(close(los_probability(0.0, &p), 1.0 / (1.0 + 5f64.exp()), 1e-15));
        // 1/(1+e^-8.5)
        assert!(close(los_probability(45.0, &p), 0.999_796_6, 1e-7));
    }

    #[test]
    fn snr_log_mean_identities() {
        let mut p = PropagationParams::default();
        p.tx_power = 10.0 * p.noise / p.beta_los;
        assert!(close(snr_log_mean(1.0, Segment::Los, &p), 10f64.ln(), 1e-12));
        let p = PropagationParams::default();
        for s in [Segment::Los, Segment::Nlos] {
            let (_, alpha, _) = p.segment(s);
            let diff = snr_log_mean(200.0, s, &p) - snr_log_mean(100.0, s, &p);
            assert!(close(diff, -alpha * 2f64.ln(), 1e-12));
        }
        // ln(10^(-0.5) * 10^(-2) / 10^(-9.5)) - 2.2 ln 100 = 7 ln 10 - 4.4 ln 10 = 2.6 ln 10
        assert!(close(
            snr_log_mean(100.0, Segment::Los, &p),
            2.6 * 10f64.ln(),
            1e-12
        ));
    }

    #[test]
    fn phi_examples() {
        assert!(close(phi_cdf(10.0, 10f64.ln(), 1.3), 0.5, 1e-15));
        assert!(close(phi_cdf(10.0, -1e3, 1.0), 1.0, 1e-15));
        assert!(close(phi_cdf(10.0, 1e3, 1.0), 0.0, 1e-15));
        // standard normal CDF at -1 = 0.158655253931457
        assert!(close(phi_cdf(10.0, 10f64.ln() + 1.0, 1.0), 0.158_655_253_931_457, 1e-12));
    }

    #[test]
    fn per_limits_and_breakdown() {
        let p = PropagationParams::default();
        assert!(per_at_distance(1e7, 60.0, &p) > 1.0 - 1e-9);
        let mut strong = p;
        strong.tx_power *= 1e12;
        assert!(per_at_distance(0.0, 60.0, &strong) < 1e-12);

        let b = per_breakdown(200.0, 60.0, &p);
        let theta = (60f64 / 200.0).atan().to_degrees();
        let rho = 1.0 / (1.0 + (-0.3 * theta + 5.0).exp());
        let d = (200f64 * 200.0 + 3600.0).sqrt();
        let mu_l = (p.tx_power * p.beta_los / p.noise).ln() - 2.2 * d.ln();
        let mu_n = (p.tx_power * p.beta_nlos / p.noise).ln() - 3.0 * d.ln();
        let phi = |mu: f64, s: f64| 0.5 * (1.0 + libm::erf((10f64.ln() - mu) / (s * 2f64.sqrt())));
        let expect = rho * phi(mu_l, 1.0) + (1.0 - rho) * phi(mu_n, 2.0);
        assert!(close(b.per, expect, 1e-14));
    }

    #[test]
    fn approx_per_examples() {
        let fit = LogisticPerFit::from_coefficients(0.2, -2.0);
        assert!(close(approx_per(10.0, &fit), 0.5, 1e-15));
        assert!(close(approx_per(30.0, &fit), 0.017_986_209_962_091_6, 1e-15));
    }

    #[test]
    fn fit_recovers_exact_logistic() {
        let (b1, b2) = (0.31, -6.2);
        let thetas: Vec<f64> = (0..60).map(|i| 3.0 + i as f64 * 1.4).collect();
        let qs: Vec<f64> = thetas
            .iter()
            .map(|t| 1.0 / (1.0 + (b1 * t + b2).exp()))
            .collect();
        // keep only samples the clamp leaves untouched
        let (t, q): (Vec<f64>, Vec<f64>) = thetas
            .into_iter()
            .zip(qs)
            .filter(|(_, q)| *q > 1e-6 && *q < 1.0 - 1e-6)
            .unzip();
        let (f1, f2) = fit_logistic_samples(&t, &q).unwrap();
        assert!(close(f1, b1, 1e-6) && close(f2, b2, 1e-6), "{f1} {f2}");
    }

    #[test]
    fn fit_default_quality() {
        let p = PropagationParams::default();
        let grid = distance_grid(1132.0, 256);
        let fit = fit_logistic_per(&p, 60.0, &grid).unwrap();
        assert!(fit.b1 > 0.0);
        assert!(fit.max_abs_error <= 0.05, "{fit:?}");
        let overhead = per_at_distance(0.0, 60.0, &p);
        assert!(close(fit.approx_per(90.0), overhead, 0.05));
    }

    #[test]
    fn degenerate_fit_rejected() {
        let grid = distance_grid(100.0, 30);
        let mut p = PropagationParams::default();
        p.tx_power *= 1e-12;
        assert!(matches!(
            fit_logistic_per(&p, 60.0, &grid),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_logistic_per(&PropagationParams::default(), 60.0, &grid[..10]).is_err());
    }

    #[test]
    fn deterministic_uplink_when_shadowing_vanishes() {
        let mut p = PropagationParams::default();
        p.sigma_los = 1e-12;
        let mut rng = stream(1, Stream::Uplink, &[]);
        // mean SNR at 60 m far above threshold
        for _ in 0..1000 {
            assert!(sample_uplink_on(Segment::Los, 60.0, &p, &mut rng).success);
        }
        // and far below at 5 km
        for _ in 0..1000 {
            assert!(!sample_uplink_on(Segment::Los, 5000.0, &p, &mut rng).success);
        }
    }

    proptest! {
        #[test]
        fn per_non_decreasing_in_distance(a in 0.0f64..1500.0, b in 0.0f64..1500.0) {
            let p = PropagationParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(per_at_distance(lo, 60.0, &p) <= per_at_distance(hi, 60.0, &p) + 1e-15);
        }

        #[test]
        fn phi_bounded_and_monotone(g in 0.01f64..100.0, mu in -10.0f64..10.0, s in 0.1f64..5.0, dg in 0.0f64..10.0, dmu in 0.0f64..5.0) {
            let v = phi_cdf(g, mu, s);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(phi_cdf(g + dg, mu, s) >= v);
            prop_assert!(phi_cdf(g, mu + dmu, s) <= v);
        }

        #[test]
        fn approx_per_decreasing(t1 in 0.0f64..90.0, t2 in 0.0f64..90.0) {
            let fit = LogisticPerFit::from_coefficients(0.3, -5.0);
            prop_assume!(t1 < t2);
            prop_assert!(approx_per(t1, &fit) >= approx_per(t2, &fit));
        }
    }
}
