use serde::{Deserialize, Serialize};

/// `(1-α)·L_t + α·L_s + λ·L_c`.
#[inline]
pub fn total_loss(l_t: f64, l_s: f64, l_c: f64, alpha: f64, lambda: f64) -> f64 {
    (1.0 - alpha) * l_t + alpha * l_s + lambda * l_c
}

/// Per-step loss components and the weights that combined them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_t: f64,
    pub l_s: f64,
    pub l_c: f64,
    pub l_all: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(l_t: f64, l_s: f64, l_c: f64, alpha: f64, lambda: f64) -> Self {
        LossBreakdown {
            l_t,
            l_s,
            l_c,
            l_all: total_loss(l_t, l_s, l_c, alpha, lambda),
            alpha,
            lambda,
        }
    }

    /// Target-only training: the whole objective is the target loss.
    pub fn single_domain(l_t: f64) -> Self {
        Self::new(l_t, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.l_t.is_finite() && self.l_s.is_finite() && self.l_c.is_finite() && self.l_all.is_finite()
    }
}
