//! Thresholds and tests for detecting a sparse spike.
//!
//! H0: `x ~ N(0, I_n)`; H1: `x ~ N(0, I_n + theta v v')` with `card(v) <= k`.
//! With `m` samples, `mu = n/m`, `kappa = k/n` and
//! `Delta = 4 log(9 e n / k) + 4 log(1/delta)`, the statistic `phi(rho)` of
//! the sample covariance (and its relaxation `psi(rho)`) separates the two
//! hypotheses with probability `1 - 3 delta` once `theta` exceeds the
//! thresholds computed here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::vartheta;
use crate::linalg::lambda_max;
use crate::model::{CovarianceMatrix, Hypothesis, ModelConfig};
use crate::{Error, Result};

const E: f64 = std::f64::consts::E;

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1]")));
    }
    Ok(())
}

/// `sqrt(log(1/delta)/m)`, the deviation term shared by all formulas.
fn deviation(m: usize, delta: f64) -> f64 {
    ((1.0 / delta).ln() / m as f64).sqrt()
}

/// `Delta = 4 log(9 e n / k) + 4 log(1/delta)`.
pub fn delta_level(n: usize, k_star: usize, delta: f64) -> Result<f64> {
    if k_star == 0 || k_star > n {
        return Err(Error::invalid(format!("k* = {k_star} must lie in [1, {n}]")));
    }
    check_delta(delta)?;
    Ok(4.0 * (9.0 * E * n as f64 / k_star as f64).ln() + 4.0 * (1.0 / delta).ln())
}

/// How the penalty `rho` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RhoMode {
    /// `Delta/m + Delta/sqrt(k m (Delta + 4/e))`, optimal for `phi`.
    Optimal,
    /// `1/n`.
    Small,
    Manual(f64),
}

impl fmt::Display for RhoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoMode::Optimal => f.write_str("optimal"),
            RhoMode::Small => f.write_str("small"),
            RhoMode::Manual(v) => write!(f, "manual:{v:?}"),
        }
    }
}

impl FromStr for RhoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(RhoMode::Optimal),
            "small" => Ok(RhoMode::Small),
            _ => {
                let v = s
                    .strip_prefix("manual:")
                    .ok_or_else(|| Error::Parse(format!("unknown rho mode {s:?}")))?;
                let v: f64 = v.parse().map_err(|e| Error::Parse(format!("rho mode {s:?}: {e}")))?;
                Ok(RhoMode::Manual(v))
            }
        }
    }
}

impl From<RhoMode> for String {
    fn from(mode: RhoMode) -> Self {
        mode.to_string()
    }
}

impl TryFrom<String> for RhoMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

pub fn rho_schedule(mode: RhoMode, n: usize, m: usize, k_star: usize, delta_level: f64) -> Result<f64> {
    let rho = match mode {
        RhoMode::Optimal => {
            let d = delta_level;
            d / m as f64 + d / (k_star as f64 * m as f64 * (d + 4.0 / E)).sqrt()
        }
        RhoMode::Small => 1.0 / n as f64,
        RhoMode::Manual(v) => v,
    };
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    Ok(rho)
}

/// Detection thresholds on `theta` for the `phi` statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaThresholds {
    pub phi: f64,
    /// Sharper threshold for `rho = 1/n`, defined only when `mu Delta < 1`.
    pub phi_small: Option<f64>,
}

pub fn theta_thresholds(n: usize, m: usize, k_star: usize, delta: f64) -> Result<ThetaThresholds> {
    let d = delta_level(n, k_star, delta)?;
    let s = deviation(m, delta);
    let denom = 1.0 - 2.0 * s;
    if !(denom > 0.0) {
        return Err(Error::invalid(format!(
            "m = {m} is too small for delta = {delta}: 2 sqrt(log(1/delta)/m) >= 1"
        )));
    }
    let (mf, kf) = (m as f64, k_star as f64);
    let q = kf * (d + 4.0 / E) / mf;
    let phi = (2.0 * q.sqrt() + q + 2.0 * s) / denom;
    let mu_d = n as f64 / mf * d;
    let phi_small = (mu_d < 1.0).then(|| {
        let kappa = kf / n as f64;
        ((1.0 + 4.0 / (E * d)) * kappa + mu_d / (1.0 - mu_d) + 2.0 * s) / denom
    });
    Ok(ThetaThresholds { phi, phi_small })
}

/// Acceptance levels `(tau0, tau1)`: under H0, `phi(rho) <= tau0`; under H1,
/// `phi(rho) >= tau1` (each with high probability).
pub fn tau_levels(theta: f64, _n: usize, m: usize, k_star: usize, delta: f64, delta_level: f64) -> Result<(f64, f64)> {
    check_delta(delta)?;
    let (mf, kf, d) = (m as f64, k_star as f64, delta_level);
    let s = deviation(m, delta);
    let shrink = (kf * d / (mf * (1.0 + 4.0 / (E * d)))).sqrt();
    let tau0 = 1.0 + (kf * (d + 4.0 / E) / mf).sqrt() + 4.0 * kf / (E * mf) + 4.0 / (E * d) * shrink;
    let tau1 = 1.0 + theta - shrink - kf * d / mf - 2.0 * (1.0 + theta) * s;
    Ok((tau0, tau1))
}

/// Floor `beta(mu, kappa)` on `psi/(n rho)`-based approximation ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRatio {
    pub beta: f64,
    pub c: f64,
    /// True when the numerator of `c` is not positive and the bound says
    /// nothing (`beta` is then 0).
    pub vacuous: bool,
}

pub fn beta_ratio(mu: f64, kappa: f64, m: usize, delta: f64, delta_level: f64) -> Result<BetaRatio> {
    if !(mu > 0.0) || !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid(format!(
            "need mu > 0 and kappa in (0, 1), got {mu}, {kappa}"
        )));
    }
    check_delta(delta)?;
    let d = delta_level;
    let s = deviation(m, delta);
    let num = 1.0 - mu * d * kappa - (mu * kappa).sqrt() / (d + 4.0 / E).sqrt() - 2.0 * s;
    let den = mu * d + mu * d / (kappa * (d + 4.0 / E)).sqrt();
    let c = num / den;
    if !(num > 0.0) {
        return Ok(BetaRatio {
            beta: 0.0,
            c,
            vacuous: true,
        });
    }
    Ok(BetaRatio {
        beta: vartheta(c)? / c,
        c,
        vacuous: false,
    })
}

/// Ratio `theta(c)/c` at `c = (1 - rho k - 2 sqrt(log(1/delta)/m)) / (n rho)`,
/// the floor on `psi(rho)/(n rho)` under H0 for the `rho` actually in use.
pub fn beta_at_rho(n: usize, m: usize, k_star: usize, delta: f64, rho: f64) -> Result<BetaRatio> {
    check_delta(delta)?;
    let num = 1.0 - rho * k_star as f64 - 2.0 * deviation(m, delta);
    let c = num / (n as f64 * rho);
    if !(num > 0.0) {
        return Ok(BetaRatio {
            beta: 0.0,
            c,
            vacuous: true,
        });
    }
    Ok(BetaRatio {
        beta: vartheta(c)? / c,
        c,
        vacuous: false,
    })
}

/// `(h1_lower, h0_upper)`: a high-probability lower bound on `phi(rho)` under
/// H1 and upper bound under H0. `h0_upper` needs `rho m / Delta > 1` and is
/// `None` otherwise. With `theta = 0`, `h1_lower` is a floor on `psi(rho)`
/// under either hypothesis.
pub fn h_bounds(
    theta: f64,
    rho: f64,
    k_star: usize,
    m: usize,
    delta: f64,
    delta_level: f64,
) -> Result<(f64, Option<f64>)> {
    check_delta(delta)?;
    let (mf, kf, d) = (m as f64, k_star as f64, delta_level);
    let h1 = 1.0 + theta - rho * kf - 2.0 * (1.0 + theta) * deviation(m, delta);
    let ratio = rho * mf / d;
    let h0 = (ratio > 1.0).then(|| 1.0 + 4.0 * kf * rho / (E * d) + 1.0 / (ratio - 1.0));
    Ok((h1, h0))
}

/// Spike strength above which `lambda_max` alone separates the hypotheses.
pub fn lambda_max_threshold(mu: f64) -> f64 {
    mu.sqrt() + mu
}

/// Every scalar needed to run the `phi` and `psi` tests for one
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPlan {
    pub config: ModelConfig,
    pub rho_mode: RhoMode,
    pub delta_level: f64,
    pub rho: f64,
    pub mu: f64,
    pub kappa: f64,
    pub theta_phi: f64,
    pub theta_phi_small: Option<f64>,
    pub tau0: f64,
    pub tau1: f64,
    /// `beta(mu, kappa)` and the `c` it is evaluated at.
    pub beta: f64,
    pub beta_c: f64,
    pub beta_vacuous: bool,
    /// Same ratio, recomputed at the plan's `rho`.
    pub beta_at_rho: f64,
    pub beta_at_rho_c: f64,
    /// `theta_phi / beta`; absent when `beta = 0`.
    pub theta_psi: Option<f64>,
    /// Midpoint of `[tau0/beta, tau1]` when that interval is nonempty.
    pub tau_psi: Option<f64>,
    /// True when `[tau0/beta, tau1]` is empty: the guarantees do not cover
    /// this configuration.
    pub below_threshold: bool,
    pub h1_lower: f64,
    pub h0_upper: Option<f64>,
    /// `sqrt(mu) + mu`, for comparison with `theta_phi`.
    pub lambda_max_threshold: f64,
}

pub fn make_plan(config: &ModelConfig, rho_mode: RhoMode) -> Result<DetectionPlan> {
    config.validate()?;
    let (n, m, k) = (config.n, config.m, config.k_star);
    let delta = config.delta;
    let d = delta_level(n, k, delta)?;
    let rho = rho_schedule(rho_mode, n, m, k, d)?;
    let thresholds = theta_thresholds(n, m, k, delta)?;
    let (tau0, tau1) = tau_levels(config.theta, n, m, k, delta, d)?;
    if config.theta > thresholds.phi && tau0 > tau1 + 1e-12 * tau1.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "tau0 = {tau0} exceeds tau1 = {tau1} above threshold"
        )));
    }
    let (mu, kappa) = (config.mu(), config.kappa());
    let beta = if kappa < 1.0 {
        beta_ratio(mu, kappa, m, delta, d)?
    } else {
        // A dense spike leaves the ratio undefined; treat as vacuous.
        BetaRatio {
            beta: 0.0,
            c: f64::NAN,
            vacuous: true,
        }
    };
    let at_rho = beta_at_rho(n, m, k, delta, rho)?;
    let theta_psi = (beta.beta > 0.0).then(|| thresholds.phi / beta.beta);
    let tau_psi = (beta.beta > 0.0 && tau0 / beta.beta <= tau1).then(|| 0.5 * (tau0 / beta.beta + tau1));
    let (h1_lower, h0_upper) = h_bounds(config.theta, rho, k, m, delta, d)?;
    Ok(DetectionPlan {
        config: config.clone(),
        rho_mode,
        delta_level: d,
        rho,
        mu,
        kappa,
        theta_phi: thresholds.phi,
        theta_phi_small: thresholds.phi_small,
        tau0,
        tau1,
        beta: beta.beta,
        beta_c: beta.c,
        beta_vacuous: beta.vacuous,
        beta_at_rho: at_rho.beta,
        beta_at_rho_c: at_rho.c,
        theta_psi,
        tau_psi,
        below_threshold: tau_psi.is_none(),
        h1_lower,
        h0_upper,
        lambda_max_threshold: lambda_max_threshold(mu),
    })
}

impl DetectionPlan {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Rejects H0 iff `value > tau`.
pub fn run_test(statistic_value: f64, tau: f64) -> bool {
    statistic_value > tau
}

/// Covariance statistic computed alongside the built-in ones.
pub trait Statistic: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, sigma: &CovarianceMatrix) -> Result<f64>;
}

/// `lambda_max` and largest diagonal entry of a sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub lambda_max: f64,
    pub diag_max: f64,
}

pub fn baseline_stats(sigma: &CovarianceMatrix) -> Result<BaselineStats> {
    Ok(BaselineStats {
        lambda_max: lambda_max(sigma.entries())?,
        diag_max: sigma.max_variance(),
    })
}

/// All statistics of one sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRecord {
    pub trial: usize,
    pub hypothesis: Hypothesis,
    /// Stream id of the samples under the experiment seed.
    pub seed: u64,
    /// Midpoint of the certified interval.
    pub psi: f64,
    pub psi_lower: f64,
    pub psi_upper: f64,
    pub converged: bool,
    pub iterations: usize,
    pub lambda_max: f64,
    pub diag_max: f64,
    /// Values of plugin statistics, by name.
    pub plugins: Vec<(String, f64)>,
}

impl StatisticRecord {
    pub fn psi_width(&self) -> f64 {
        self.psi_upper - self.psi_lower
    }

    /// Value of a built-in or plugin statistic by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "psi" => Some(self.psi),
            "lambda_max" => Some(self.lambda_max),
            "diag_max" => Some(self.diag_max),
            _ => self.plugins.iter().find(|(k, _)| k == name).map(|(_, v)| *v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_config(theta: f64) -> ModelConfig {
        ModelConfig::new(100, 50, 20, theta, 0.01, 1).unwrap()
    }

    #[test]
    fn delta_level_values() {
        assert!((delta_level(7, 7, 1.0).unwrap() - 4.0 * (9.0 * E).ln()).abs() < 1e-12);
        assert!((delta_level(7, 7, 1.0).unwrap() - 12.79).abs() < 5e-3);
        let d = delta_level(100, 20, 0.01).unwrap();
        let want = 4.0 * (45.0 * E).ln() + 4.0 * 100f64.ln();
        assert!((d - want).abs() < 1e-12);
        assert!((d - 37.65).abs() < 5e-3);
        assert!(delta_level(10, 11, 0.1).is_err());
        assert!(delta_level(10, 2, 0.0).is_err());
        assert!(delta_level(100, 10, 0.1).unwrap() < delta_level(100, 5, 0.1).unwrap());
        assert!(delta_level(200, 10, 0.1).unwrap() > delta_level(100, 10, 0.1).unwrap());
    }

    #[test]
    fn rho_modes() {
        let d = delta_level(100, 20, 0.01).unwrap();
        let opt = rho_schedule(RhoMode::Optimal, 100, 50, 20, d).unwrap();
        assert!((opt - 0.943).abs() < 5e-4, "{opt}");
        assert!(opt > d / 50.0);
        assert_eq!(rho_schedule(RhoMode::Small, 100, 50, 20, d).unwrap(), 0.01);
        assert_eq!(rho_schedule(RhoMode::Manual(0.3), 100, 50, 20, d).unwrap(), 0.3);
        assert!(rho_schedule(RhoMode::Manual(-1.0), 100, 50, 20, d).is_err());
        for s in ["optimal", "small", "manual:0.25"] {
            assert_eq!(s.parse::<RhoMode>().unwrap().to_string(), s);
        }
        assert!("manual:x".parse::<RhoMode>().is_err());
        assert!("large".parse::<RhoMode>().is_err());
    }

    #[test]
    fn thresholds_and_levels() {
        let t = theta_thresholds(100, 50, 20, 0.01).unwrap();
        assert!(t.phi.is_finite() && t.phi > 0.0);
        // mu Delta = 2 * 37.65 > 1: no small-rho threshold.
        assert!(t.phi_small.is_none());
        assert!(theta_thresholds(100, 10, 20, 0.01).is_err());

        let huge = theta_thresholds(100, 100_000_000, 1, 0.01).unwrap();
        assert!(huge.phi < 1e-2);
        let small = theta_thresholds(100, 1_000_000_000, 1, 0.01)
            .unwrap()
            .phi_small
            .unwrap();
        let s = deviation(1_000_000_000, 0.01);
        assert!((small - 2.0 * s / (1.0 - 2.0 * s)).abs() < 0.011);

        let d = delta_level(100, 20, 0.01).unwrap();
        let (tau0, tau1) = tau_levels(t.phi + 1.0, 100, 50, 20, 0.01, d).unwrap();
        assert!(tau0 <= tau1);
        let (tau0, tau1) = tau_levels(3.0, 100, 50, 20, 0.01, d).unwrap();
        assert!(tau0 > tau1, "theta = 3 lies below theta_phi here");
        let (tau0, tau1) = tau_levels(0.0, 100, 1_000_000_000_000, 1, 0.5, 1.0).unwrap();
        assert!((tau0 - 1.0).abs() < 1e-5 && (tau1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn tau_gap_matches_threshold_identity() {
        let (n, m, k, delta) = (60, 400, 4, 0.05);
        let d = delta_level(n, k, delta).unwrap();
        let t = theta_thresholds(n, m, k, delta).unwrap();
        let s = deviation(m, delta);
        for &theta in &[0.0, 0.5, t.phi, 2.0 * t.phi] {
            let (tau0, tau1) = tau_levels(theta, n, m, k, delta, d).unwrap();
            let want = (1.0 - 2.0 * s) * (theta - t.phi);
            assert!((tau1 - tau0 - want).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_limits() {
        let d = 5.0;
        let near_zero_mu = beta_ratio(1e-9, 0.1, 1_000_000_000_000, 0.5, d).unwrap();
        assert!(near_zero_mu.beta > 0.99);
        let small_kappa = beta_ratio(0.01, 1e-9, 1_000_000, 0.1, d).unwrap();
        assert!(small_kappa.beta < 1e-3);
        let vac = beta_ratio(2.0, 0.2, 50, 0.01, 37.65).unwrap();
        assert!(vac.vacuous && vac.beta == 0.0);
        // Monotone in 1/mu at fixed kappa.
        let mut prev = 0.0;
        for inv_mu in [1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 1000.0] {
            let b = beta_ratio(1.0 / inv_mu, 0.05, 1_000_000, 0.1, d).unwrap().beta;
            assert!(b >= prev && b <= 1.0);
            prev = b;
        }
    }

    #[test]
    fn h_bound_cases() {
        let (h1, h0) = h_bounds(0.0, 0.1, 5, 100, 0.1, 10.0).unwrap();
        assert!((h1 - (1.0 - 0.5 - 2.0 * deviation(100, 0.1))).abs() < 1e-15);
        assert!(h0.is_none());
        let (_, a) = h_bounds(0.0, 1e3, 5, 100, 0.1, 10.0).unwrap();
        let (_, b) = h_bounds(0.0, 2e3, 5, 100, 0.1, 10.0).unwrap();
        let slope = (b.unwrap() - a.unwrap()) / 1e3;
        assert!((slope - 4.0 * 5.0 / (E * 10.0)).abs() < 1e-6);
    }

    #[test]
    fn reference_configuration_plans() {
        let plan = make_plan(&reference_config(3.0), RhoMode::Small).unwrap();
        assert_eq!(plan.rho, 0.01);
        assert!(plan.theta_phi > 3.0);
        assert!(plan.beta_vacuous);
        assert!(plan.below_threshold && plan.tau_psi.is_none());
        assert!((plan.mu - 2.0).abs() < 1e-15 && (plan.kappa - 0.2).abs() < 1e-15);
        assert!((plan.lambda_max_threshold - (2f64.sqrt() + 2.0)).abs() < 1e-15);

        let plan0 = make_plan(&reference_config(0.0), RhoMode::Optimal).unwrap();
        assert!(plan0.below_threshold);
    }

    #[test]
    fn plan_above_threshold_has_tau_psi() {
        let cfg = ModelConfig::new(50, 1_000_000, 2, 5.0, 0.05, 3).unwrap();
        let plan = make_plan(&cfg, RhoMode::Optimal).unwrap();
        assert!(!plan.beta_vacuous && plan.beta > 0.0 && plan.beta <= 1.0);
        let theta_psi = plan.theta_psi.unwrap();
        assert!(cfg.theta > theta_psi);
        let tau = plan.tau_psi.unwrap();
        assert!(plan.tau0 / plan.beta <= tau && tau <= plan.tau1);
    }

    #[test]
    fn h_bounds_cross_at_theta_phi() {
        // At the optimal rho, h1_lower - h0_upper = (1 - 2s)(theta - theta_phi).
        let (n, m, k, delta) = (100, 50, 20, 0.01);
        let s = deviation(m, delta);
        for &theta in &[0.0, 3.0, 30.0, 61.0, 62.0, 100.0] {
            let plan = make_plan(&ModelConfig::new(n, m, k, theta, delta, 0).unwrap(), RhoMode::Optimal).unwrap();
            let diff = plan.h1_lower - plan.h0_upper.unwrap();
            assert!((diff - (1.0 - 2.0 * s) * (theta - plan.theta_phi)).abs() < 1e-9);
            assert_eq!(diff > 0.0, theta > plan.theta_phi);
        }
    }

    #[test]
    fn plan_toml_round_trip() {
        let plan = make_plan(&reference_config(3.0), RhoMode::Manual(0.125)).unwrap();
        let text = plan.to_toml().unwrap();
        assert!(text.contains("rho_mode = \"manual:0.125\""));
        let back = DetectionPlan::from_toml(&text).unwrap();
        assert_eq!(back, plan);
        assert_eq!(make_plan(&reference_config(3.0), RhoMode::Manual(0.125)).unwrap(), plan);
    }

    #[test]
    fn tests_and_baselines() {
        assert!(!run_test(1.0, 1.0));
        assert!(run_test(1.0 + 1e-9, 1.0));
        let id = CovarianceMatrix::diagonal(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            baseline_stats(&id).unwrap(),
            BaselineStats {
                lambda_max: 1.0,
                diag_max: 1.0
            }
        );
        let d = CovarianceMatrix::diagonal(&[3.0, 1.0]).unwrap();
        let b = baseline_stats(&d).unwrap();
        assert!((b.lambda_max - 3.0).abs() < 1e-14 && b.diag_max == 3.0);
    }

    #[test]
    fn small_regime_beats_lambda_max() {
        // The psi threshold is below sqrt(mu) + mu when kappa is small next to
        // sqrt(mu) and mu Delta^2 < 1.
        let d = 20.0;
        for &kappa in &[1e-4, 1e-3, 3e-3] {
            for &mu in &[1e-4, 5e-4, 1e-3] {
                let mu_d = mu * d;
                let lhs = (1.0 + 4.0 / (E * d)) * kappa + mu_d / (1.0 - mu_d);
                assert!(lhs < lambda_max_threshold(mu), "kappa {kappa} mu {mu}");
            }
        }
    }

    proptest! {
        #[test]
        fn levels_ordered_above_threshold(
            n in 10usize..400,
            kfrac in 0.01f64..0.5,
            m in 50usize..100_000,
            delta in 0.001f64..0.5,
            extra in 0.0f64..5.0,
        ) {
            let k = ((kfrac * n as f64) as usize).max(1);
            prop_assume!(2.0 * deviation(m, delta) < 1.0);
            let d = delta_level(n, k, delta).unwrap();
            let t = theta_thresholds(n, m, k, delta).unwrap();
            let theta = t.phi * (1.0 + 1e-9) + extra;
            let (tau0, tau1) = tau_levels(theta, n, m, k, delta, d).unwrap();
            prop_assert!(tau0 <= tau1);
        }
    }
}
