//! Similarity-preserving contrastive regularizer over transformed users.

use crate::backbone::matrix::{axpy, dot, Matrix};
use crate::similarity::PairSets;

/// `L_c = -(1/|S|) Σ_{(i,j)∈S} log( |A|·exp(z_ij/τ) / Σ_{(x,y)∈A} exp(z_xy/τ) )`
/// with `z` the dot product of transformed vectors (cosine when
/// `normalize`). Row `k` of `transformed` belongs to `pairs.users[k]`.
///
/// Returns the loss and its gradient with respect to every row. An empty
/// similar set contributes zero.
pub fn contrastive_loss(transformed: &Matrix, pairs: &PairSets, tau: f64, normalize: bool) -> (f64, Matrix) {
    let u = pairs.users.len();
    assert_eq!(transformed.rows(), u, "one row per distinct batch user");
    let dim = transformed.dim();
    let mut grad = Matrix::zeros(u, dim);
    if pairs.similar.is_empty() || u < 2 {
        return (0.0, grad);
    }
    let norms: Vec<f64> = (0..u)
        .map(|x| dot(transformed.row(x), transformed.row(x)).sqrt())
        .collect();
    let h = if normalize {
        let mut h = transformed.clone();
        for (x, &n) in norms.iter().enumerate() {
            let r = h.row_mut(x);
            if n > 0.0 {
                r.iter_mut().for_each(|v| *v /= n);
            } else {
                r.fill(0.0);
            }
        }
        h
    } else {
        transformed.clone()
    };
    let logit = |x: usize, y: usize| dot(h.row(x), h.row(y)) / tau;

    let mut max = f64::NEG_INFINITY;
    for x in 0..u {
        for y in x + 1..u {
            max = max.max(logit(x, y));
        }
    }
    let mut sum = 0.0;
    for x in 0..u {
        for y in x + 1..u {
            sum += 2.0 * (logit(x, y) - max).exp();
        }
    }
    let lse = max + sum.ln();
    let n_all = pairs.n_all() as f64;
    let n_sim = pairs.similar.len() as f64;
    let sim_mean: f64 = pairs.similar.iter().map(|&(i, j)| logit(i, j)).sum::<f64>() / n_sim;
    let loss = lse - n_all.ln() - sim_mean;

    // dL/dlogit_xy = softmax_xy - [xy ∈ S]/|S|, logit_xy = h_x·h_y/τ
    let mut dh = Matrix::zeros(u, dim);
    for x in 0..u {
        for y in x + 1..u {
            // (x, y) and (y, x) share the same softmax weight
            let c = 2.0 * (logit(x, y) - lse).exp() / tau;
            axpy(c, h.row(y), dh.row_mut(x));
            axpy(c, h.row(x), dh.row_mut(y));
        }
    }
    let c = -1.0 / (n_sim * tau);
    for &(i, j) in &pairs.similar {
        axpy(c, h.row(j), dh.row_mut(i));
        axpy(c, h.row(i), dh.row_mut(j));
    }
    if normalize {
        for (x, &norm) in norms.iter().enumerate() {
            if norm == 0.0 {
                continue;
            }
            let (hx, dhx) = (h.row(x), dh.row(x));
            let proj = dot(hx, dhx);
            for ((o, &dv), &hv) in grad.row_mut(x).iter_mut().zip(dhx).zip(hx) {
                *o = (dv - hv * proj) / norm;
            }
        }
    } else {
        grad = dh;
    }
    (loss, grad)
}
