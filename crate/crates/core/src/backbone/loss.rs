use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Bpr,
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss value with its derivative for every positive and negative score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLoss {
    pub loss: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// Mean binary cross-entropy over all `pos.len() + neg.len()` entries.
pub fn bce_loss(pos: &[f64], neg: &[f64]) -> ScoreLoss {
    let n = (pos.len() + neg.len()) as f64;
    assert!(n > 0.0, "bce_loss on empty input");
    let mut loss = 0.0;
    let d_pos = pos
        .iter()
        .map(|&s| {
            loss += softplus(-s);
            (sigmoid(s) - 1.0) / n
        })
        .collect();
    let d_neg = neg
        .iter()
        .map(|&s| {
            loss += softplus(s);
            sigmoid(s) / n
        })
        .collect();
    ScoreLoss {
        loss: loss / n,
        d_pos,
        d_neg,
    }
}

/// Mean `-ln σ(s_pos - s_neg)` over paired scores.
pub fn bpr_loss(pos: &[f64], neg: &[f64]) -> ScoreLoss {
    assert_eq!(pos.len(), neg.len(), "bpr_loss needs paired scores");
    assert!(!pos.is_empty(), "bpr_loss on empty input");
    let n = pos.len() as f64;
    let mut loss = 0.0;
    let mut d_pos = Vec::with_capacity(pos.len());
    let mut d_neg = Vec::with_capacity(pos.len());
    for (&p, &q) in pos.iter().zip(neg) {
        let x = p - q;
        loss += softplus(-x);
        let g = -sigmoid(-x) / n;
        d_pos.push(g);
        d_neg.push(-g);
    }
    ScoreLoss {
        loss: loss / n,
        d_pos,
        d_neg,
    }
}

pub fn score_loss(kind: LossKind, pos: &[f64], neg: &[f64]) -> ScoreLoss {
    match kind {
        LossKind::Bce => bce_loss(pos, neg),
        LossKind::Bpr => bpr_loss(pos, neg),
    }
}
