use crate::backbone::embedding::{EmbeddingTable, TableRole};
use crate::backbone::matrix::{axpy, dot, Matrix};

/// Affine user map `F(u) = W·u + b` applied to target-domain users.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformLayer {
    /// `dim × dim`, row-major; row `a` produces output coordinate `a`.
    pub weight: EmbeddingTable,
    /// `1 × dim`.
    pub bias: EmbeddingTable,
}

impl TransformLayer {
    /// W = I, b = 0.
    pub fn identity(dim: usize) -> Self {
        let mut w = Matrix::zeros(dim, dim);
        for a in 0..dim {
            w.row_mut(a)[a] = 1.0;
        }
        TransformLayer {
            weight: EmbeddingTable::new(TableRole::TransformWeight, w),
            bias: EmbeddingTable::new(TableRole::TransformBias, Matrix::zeros(1, dim)),
        }
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Self {
        assert_eq!(weight.rows(), weight.dim(), "W must be square");
        assert_eq!(bias.len(), weight.dim(), "b must match W");
        let dim = bias.len();
        TransformLayer {
            weight: EmbeddingTable::new(TableRole::TransformWeight, weight),
            bias: EmbeddingTable::new(TableRole::TransformBias, Matrix::from_vec(1, dim, bias)),
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.dim()
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let b = self.bias.row(0);
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot(self.weight.row(a), u) + b[a];
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(u, &mut out);
        out
    }

    /// Given `g = dL/dF(u)`, accumulates `dL/dW += g uᵀ` and `dL/db += g`
    /// and returns `dL/du = Wᵀ g`.
    pub fn backward(&self, u: &[f64], g: &[f64], d_weight: &mut [f64], d_bias: &mut [f64]) -> Vec<f64> {
        let dim = self.dim();
        let mut du = vec![0.0; dim];
        for a in 0..dim {
            let ga = g[a];
            if ga == 0.0 {
                continue;
            }
            axpy(ga, u, &mut d_weight[a * dim..(a + 1) * dim]);
            d_bias[a] += ga;
            axpy(ga, self.weight.row(a), &mut du);
        }
        du
    }

    pub fn is_finite(&self) -> bool {
        self.weight.values.is_finite() && self.bias.values.is_finite()
    }
}

/// Free-function form of [`TransformLayer::apply`].
pub fn transform(u: &[f64], layer: &TransformLayer) -> Vec<f64> {
    layer.apply(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant() {
        let id = TransformLayer::identity(3);
        assert_eq!(transform(&[1.0, -2.0, 0.5], &id), vec![1.0, -2.0, 0.5]);
        let c = TransformLayer::from_parts(Matrix::zeros(2, 2), vec![4.0, -1.0]);
        assert_eq!(transform(&[9.0, 7.0], &c), vec![4.0, -1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // downstream scalar: L = v · F(u) + 0.5 ‖F(u)‖²
        let w = Matrix::from_rows(&[vec![0.3, -0.7, 0.1], vec![1.2, 0.4, -0.5], vec![-0.2, 0.9, 0.6]]);
        let layer = TransformLayer::from_parts(w, vec![0.05, -0.3, 0.2]);
        let u = [0.4, -1.1, 0.8];
        let v = [1.0, -0.5, 2.0];
        let loss = |l: &TransformLayer, u: &[f64]| {
            let f = l.apply(u);
            dot(&v, &f) + 0.5 * dot(&f, &f)
        };
        let f = layer.apply(&u);
        let g: Vec<f64> = f.iter().zip(&v).map(|(fi, vi)| fi + vi).collect();
        let mut dw = vec![0.0; 9];
        let mut db = vec![0.0; 3];
        let du = layer.backward(&u, &g, &mut dw, &mut db);
        let h = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for (k, &a) in dw.iter().enumerate() {
            let (mut p, mut m) = (layer.clone(), layer.clone());
            p.weight.values.as_mut_slice()[k] += h;
            m.weight.values.as_mut_slice()[k] -= h;
            let num = (loss(&p, &u) - loss(&m, &u)) / (2.0 * h);
            assert!(rel(a, num) < 1e-5, "W[{k}] {a} vs {num}");
        }
        for k in 0..3 {
            let (mut p, mut m) = (layer.clone(), layer.clone());
            p.bias.values.as_mut_slice()[k] += h;
            m.bias.values.as_mut_slice()[k] -= h;
            let num = (loss(&p, &u) - loss(&m, &u)) / (2.0 * h);
            assert!(rel(db[k], num) < 1e-5);
            let (mut up, mut um) = (u, u);
            up[k] += h;
            um[k] -= h;
            let num = (loss(&layer, &up) - loss(&layer, &um)) / (2.0 * h);
            assert!(rel(du[k], num) < 1e-5);
        }
    }
}
