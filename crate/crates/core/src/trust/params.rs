use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning knobs for the trust update chain and the router.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Divergence penalty coefficient.
    pub kappa: f64,
    /// Mix between the short and long moving averages in the final score.
    pub mu: f64,
    /// Weight of the direct reward injection in the final score.
    pub gamma: f64,
    /// Rate of the fast, reward-tracking average.
    pub lambda_f: f64,
    /// Rate of the slow, posterior-tracking average.
    pub lambda_g: f64,
    /// Ramp temperature, in queries.
    pub ramp_t: f64,
    /// Softmax sharpness for role weights.
    pub beta: f64,
    pub top_k: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            kappa: 0.5,
            mu: 0.3,
            gamma: 0.3,
            lambda_f: 0.3,
            lambda_g: 0.1,
            ramp_t: 5.0,
            beta: 5.0,
            top_k: 3,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let all = [
            self.kappa,
            self.mu,
            self.gamma,
            self.lambda_f,
            self.lambda_g,
            self.ramp_t,
            self.beta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("hyperparameters must be finite");
        }
        if self.kappa <= 0.0 {
            return bad("kappa must be > 0");
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1]");
        }
        if self.gamma < 0.0 {
            return bad("gamma must be >= 0");
        }
        if !(self.lambda_f > 0.0 && self.lambda_f <= 1.0) {
            return bad("lambda_f must lie in (0, 1]");
        }
        if !(self.lambda_g > 0.0 && self.lambda_g <= 1.0) {
            return bad("lambda_g must lie in (0, 1]");
        }
        if self.lambda_f <= self.lambda_g {
            return bad("lambda_f must exceed lambda_g");
        }
        if self.ramp_t <= 0.0 {
            return bad("ramp_t must be > 0");
        }
        if self.beta < 0.0 {
            return bad("beta must be >= 0");
        }
        if self.top_k == 0 {
            return bad("top_k must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_values() {
        let p = HyperParams::default();
        assert_eq!(p.kappa, 0.5);
        assert_eq!(p.mu, 0.3);
        assert_eq!(p.gamma, 0.3);
        assert_eq!(p.lambda_f, 0.3);
        assert_eq!(p.lambda_g, 0.1);
        assert_eq!(p.ramp_t, 5.0);
        assert_eq!(p.beta, 5.0);
        assert_eq!(p.top_k, 3);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_inverted_timescales() {
        let p = HyperParams {
            lambda_f: 0.1,
            lambda_g: 0.3,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_zero_top_k_and_bad_kappa() {
        let p = HyperParams {
            top_k: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HyperParams {
            kappa: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let p: HyperParams = toml::from_str("beta = 2.0").unwrap();
        assert_eq!(p.beta, 2.0);
        assert_eq!(p.top_k, 3);
    }
}
