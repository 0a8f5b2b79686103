//! Window-mass confidence score over per-coordinate PMFs, EWMA smoothing of
//! tracker confidence, and the measurement/template gating rules.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pmf, Pmf4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid config value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid { key, reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatingConfig {
    /// Window width as a fraction of the bin count.
    pub alpha: f64,
    pub alpha_ewma: f64,
    pub tau_ewma: f64,
    pub tau_diff: f64,
    pub tau_template: f64,
    /// Upper bound on the largest diagonal entry of the ego-motion covariance.
    pub tau_sigma: f64,
}

impl Default for GatingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.03,
            alpha_ewma: 0.3,
            tau_ewma: 0.45,
            tau_diff: 0.25,
            tau_template: 0.7,
            tau_sigma: 0.25,
        }
    }
}

impl GatingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::invalid("alpha", "must lie in (0,1)"));
        }
        if !(self.alpha_ewma > 0.0 && self.alpha_ewma <= 1.0) {
            return Err(ConfigError::invalid("alpha_ewma", "must lie in (0,1]"));
        }
        for (key, v) in [
            ("tau_ewma", self.tau_ewma),
            ("tau_diff", self.tau_diff),
            ("tau_template", self.tau_template),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::invalid(key, "must lie in [0,1]"));
            }
        }
        if !(self.tau_sigma >= 0.0) {
            return Err(ConfigError::invalid("tau_sigma", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Inclusive bin range `[k_min, k_max]` of width `alpha * n` around `k_star`,
/// clamped into `[0, n - 1]`.
pub fn window_bounds(k_star: usize, alpha: f64, n: usize) -> (usize, usize) {
    debug_assert!(k_star < n);
    let half = alpha * n as f64 / 2.0;
    let k = k_star as f64;
    let k_min = (k - half).ceil().max(0.0) as usize;
    let k_max = ((k + half).floor() as usize).min(n - 1);
    (k_min.min(k_star), k_max.max(k_star))
}

/// Probability mass inside the window around the PMF's peak.
pub fn coordinate_score(pmf: &Pmf, alpha: f64) -> f64 {
    let (lo, hi) = window_bounds(pmf.peak(), alpha, pmf.len());
    pmf.bins()[lo..=hi].iter().sum::<f64>().clamp(0.0, 1.0)
}

/// The least concentrated of the four coordinate distributions sets the score.
pub fn pmf4_confidence(p: &Pmf4, alpha: f64) -> f64 {
    p.iter().map(|c| coordinate_score(c, alpha)).fold(f64::INFINITY, f64::min)
}

/// Exponentially weighted moving average of tracker confidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EwmaState {
    s: f64,
    initialized: bool,
}

impl EwmaState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self) -> f64 {
        self.s
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Folds in the score for the current frame. The first observation seeds
    /// the average directly.
    pub fn update(self, p_k: f64, alpha_ewma: f64) -> Self {
        let p_k = p_k.clamp(0.0, 1.0);
        let s = if self.initialized {
            alpha_ewma * p_k + (1.0 - alpha_ewma) * self.s
        } else {
            p_k
        };
        Self { s: s.clamp(0.0, 1.0), initialized: true }
    }
}

pub fn ewma_update(state: EwmaState, p_k: f64, alpha_ewma: f64) -> EwmaState {
    state.update(p_k, alpha_ewma)
}

/// Accepts a tracker measurement unless the smoothed confidence is low or the
/// current score fell sharply below it. `state` must already include `p_k`.
pub fn gate_tracker(state: &EwmaState, p_k: f64, cfg: &GatingConfig) -> bool {
    let s = state.value();
    !(s < cfg.tau_ewma || (s - p_k) > cfg.tau_diff)
}

/// Accepts an ego-motion measurement when its largest variance is within bound.
pub fn gate_ego(cov: &SMatrix<f64, 9, 9>, cfg: &GatingConfig) -> bool {
    let max_diag = (0..9).map(|i| cov[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    max_diag <= cfg.tau_sigma
}

pub fn gate_template(p_k: f64, cfg: &GatingConfig) -> bool {
    p_k > cfg.tau_template
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn window_examples() {
        assert_eq!(window_bounds(35, 0.03, 96), (34, 36));
        assert_eq!(window_bounds(0, 0.03, 96), (0, 1));
        assert_eq!(window_bounds(95, 0.03, 96), (94, 95));
        // a window narrower than one bin keeps just the peak
        assert_eq!(window_bounds(5, 0.01, 10), (5, 5));
    }

    #[test]
    fn coordinate_score_examples() {
        assert_eq!(coordinate_score(&Pmf::delta(96, 40).unwrap(), 0.03), 1.0);
        // flat PMF: the tie resolves to bin 0, so the window is clamped to two bins
        assert_abs_diff_eq!(
            coordinate_score(&Pmf::uniform(96).unwrap(), 0.03),
            2.0 / 96.0,
            epsilon = 1e-12
        );
        // an interior peak over a flat floor keeps the full three-bin window
        let mut w = vec![1.0; 96];
        w[40] = 1.0 + 1e-9;
        let flat = Pmf::from_weights(w).unwrap();
        assert_abs_diff_eq!(coordinate_score(&flat, 0.03), 3.0 / 96.0, epsilon = 1e-9);
    }

    #[test]
    fn pmf4_examples() {
        let d = |k| Pmf::delta(96, k).unwrap();
        let all = Pmf4::new(d(3), d(10), d(50), d(90)).unwrap();
        assert_eq!(pmf4_confidence(&all, 0.03), 1.0);
        let u = Pmf::uniform(96).unwrap();
        let mixed = Pmf4::new(d(3), d(10), u.clone(), d(90)).unwrap();
        assert_abs_diff_eq!(pmf4_confidence(&mixed, 0.03), 2.0 / 96.0, epsilon = 1e-12);
        let permuted = Pmf4::new(u, d(90), d(3), d(10)).unwrap();
        assert_eq!(pmf4_confidence(&permuted, 0.03), pmf4_confidence(&mixed, 0.03));
    }

    #[test]
    fn ewma_examples() {
        let mut s = EwmaState::new();
        for _ in 0..20 {
            s = s.update(0.37, 0.3);
            assert_abs_diff_eq!(s.value(), 0.37, epsilon = 1e-12);
        }
        let s = EwmaState::new().update(0.8, 0.3).update(0.4, 0.3);
        assert_abs_diff_eq!(s.value(), 0.68, epsilon = 1e-12);
        let s = EwmaState::new().update(0.8, 1.0).update(0.1, 1.0);
        assert_eq!(s.value(), 0.1);
    }

    fn with_value(s: f64) -> EwmaState {
        EwmaState::new().update(s, 1.0)
    }

    #[test]
    fn tracker_gate_examples() {
        let cfg = GatingConfig::default();
        assert!(gate_tracker(&with_value(0.9), 0.85, &cfg));
        assert!(!gate_tracker(&with_value(0.40), 0.9, &cfg));
        assert!(!gate_tracker(&with_value(0.9), 0.6, &cfg));
    }

    #[test]
    fn tracker_gate_extremes() {
        let open = GatingConfig { tau_ewma: 0.0, tau_diff: 1.0, ..Default::default() };
        let closed = GatingConfig { tau_ewma: 1.0, ..Default::default() };
        for s in [0.0, 0.2, 0.5, 0.99, 1.0] {
            for p in [0.0, 0.5, 1.0] {
                assert!(gate_tracker(&with_value(s), p, &open));
                let expect = s == 1.0 && (s - p) <= closed.tau_diff;
                assert_eq!(gate_tracker(&with_value(s), p, &closed), expect);
            }
        }
    }

    #[test]
    fn ego_gate_examples() {
        let cfg = GatingConfig { tau_sigma: 1e-3, ..Default::default() };
        assert!(gate_ego(&SMatrix::zeros(), &cfg));
        let mut c = SMatrix::<f64, 9, 9>::zeros();
        c[(4, 4)] = 2e-3;
        assert!(!gate_ego(&c, &cfg));
    }

    #[test]
    fn ego_gate_flips_exactly_at_threshold() {
        let cfg = GatingConfig { tau_sigma: 1e-3, ..Default::default() };
        let mut base = SMatrix::<f64, 9, 9>::zeros();
        for i in 0..9 {
            base[(i, i)] = 1e-4 * (i + 1) as f64 / 9.0;
        }
        base[(2, 5)] = 1e-5;
        base[(5, 2)] = 1e-5;
        // max diagonal of base is 1e-4, so the flip lands at scale 10
        let mut last = true;
        let mut flip = None;
        for step in 0..=400 {
            let k = step as f64 * 0.05;
            let ok = gate_ego(&(base * k), &cfg);
            if last && !ok {
                flip = Some(k);
            }
            assert!(last || !ok, "gate must be monotone in scale");
            last = ok;
        }
        let k = flip.expect("never rejected");
        assert!(k > 10.0 - 1e-9 && k <= 10.0 + 0.05 + 1e-9, "flip at {k}");
        assert!(gate_ego(&(base * 10.0), &cfg));
    }

    #[test]
    fn template_gate_is_strict() {
        let cfg = GatingConfig::default();
        assert!(gate_template(1.0, &cfg));
        assert!(!gate_template(0.7, &cfg));
        assert!(!gate_template(0.69, &cfg));
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let cfg: GatingConfig = serde_json::from_str(r#"{"alpha":0.05}"#).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.tau_ewma, 0.45);
        assert!(serde_json::from_str::<GatingConfig>(r#"{"alpha":0.05,"beta":1}"#).is_err());
        assert!(GatingConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
    }

    fn arb_pmf() -> impl Strategy<Value = Pmf> {
        prop::collection::vec(0.0f64..1.0, 8..128)
            .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|w| Pmf::from_weights(w).unwrap())
    }

    proptest! {
        #[test]
        fn score_in_unit_interval(p in arb_pmf(), alpha in 0.01f64..0.5) {
            let s = coordinate_score(&p, alpha);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn reflection_about_peak_preserves_score(
            left in prop::collection::vec(0.0f64..1.0, 0..60),
            right in prop::collection::vec(0.0f64..1.0, 0..60),
            peak in 1.5f64..3.0,
            alpha in 0.01f64..0.3,
        ) {
            let mut w = left.clone();
            w.push(peak);
            w.extend(&right);
            let a = Pmf::from_weights(w.clone()).unwrap();
            w.reverse();
            let b = Pmf::from_weights(w).unwrap();
            prop_assert_eq!(a.peak(), left.len());
            prop_assert_eq!(b.peak(), right.len());
            prop_assert!((coordinate_score(&a, alpha) - coordinate_score(&b, alpha)).abs() < 1e-12);
        }

        #[test]
        fn mass_inside_window_raises_score(p in arb_pmf(), extra in 0.01f64..0.5) {
            let alpha = 0.1;
            let n = p.len();
            let k = p.peak();
            let (lo, hi) = window_bounds(k, alpha, n);
            let base = coordinate_score(&p, alpha);
            let mut inside = p.bins().to_vec();
            inside[k] += extra;
            let s_in = coordinate_score(&Pmf::from_weights(inside).unwrap(), alpha);
            prop_assert!(s_in > base || base == 1.0);
            if let Some(out) = (0..n).find(|&j| j < lo || j > hi) {
                let mut outside = p.bins().to_vec();
                // keep the outside addition below the peak so the window stays put
                let room = (p.bins()[k] - outside[out]).max(0.0) * 0.9;
                if room > 1e-9 {
                    outside[out] += room.min(extra);
                    let q = Pmf::from_weights(outside).unwrap();
                    if q.peak() == k {
                        prop_assert!(coordinate_score(&q, alpha) < base);
                    }
                }
            }
        }

        #[test]
        fn ewma_stays_convex(s0 in 0.0f64..=1.0, ps in prop::collection::vec(0.0f64..=1.0, 1..50), a in 0.01f64..=1.0) {
            let mut st = EwmaState::new().update(s0, a);
            for p in ps {
                let prev = st.value();
                st = st.update(p, a);
                let lo = prev.min(p) - 1e-12;
                let hi = prev.max(p) + 1e-12;
                prop_assert!(st.value() >= lo && st.value() <= hi);
            }
        }
    }
}
