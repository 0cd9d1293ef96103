//! Symmetrically normalized user-item graph and LightGCN propagation.

use crate::backbone::matrix::{axpy, Matrix};
use crate::corpus::InteractionSet;

pub const DEFAULT_LAYERS: usize = 2;

/// Normalized adjacency `Â` of one domain's training graph, stored as two CSR
/// halves (user → item and item → user) with weight `1/sqrt(d_u·d_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    n_users: usize,
    n_items: usize,
    layers: usize,
    user_ptr: Vec<usize>,
    user_nbr: Vec<usize>,
    user_w: Vec<f64>,
    item_ptr: Vec<usize>,
    item_nbr: Vec<usize>,
    item_w: Vec<f64>,
}

impl BipartiteGraph {
    pub fn from_train(train: &InteractionSet, layers: usize) -> Self {
        let n_users = train.n_users();
        let n_items = train.n_items();
        let item_deg = train.item_degrees();
        let mut user_ptr = Vec::with_capacity(n_users + 1);
        let mut user_nbr = Vec::with_capacity(train.nnz());
        let mut user_w = Vec::with_capacity(train.nnz());
        user_ptr.push(0);
        for row in train.rows() {
            let du = row.len() as f64;
            for &i in row {
                user_nbr.push(i);
                user_w.push(1.0 / (du * item_deg[i] as f64).sqrt());
            }
            user_ptr.push(user_nbr.len());
        }
        let mut item_ptr = vec![0usize; n_items + 1];
        for &i in &user_nbr {
            item_ptr[i + 1] += 1;
        }
        for i in 0..n_items {
            item_ptr[i + 1] += item_ptr[i];
        }
        let mut fill = item_ptr.clone();
        let mut item_nbr = vec![0usize; user_nbr.len()];
        let mut item_w = vec![0.0; user_nbr.len()];
        for u in 0..n_users {
            for e in user_ptr[u]..user_ptr[u + 1] {
                let i = user_nbr[e];
                item_nbr[fill[i]] = u;
                item_w[fill[i]] = user_w[e];
                fill[i] += 1;
            }
        }
        BipartiteGraph {
            n_users,
            n_items,
            layers,
            user_ptr,
            user_nbr,
            user_w,
            item_ptr,
            item_nbr,
            item_w,
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Weight of edge (u, i), or 0 when absent.
    pub fn weight(&self, user: usize, item: usize) -> f64 {
        let range = self.user_ptr[user]..self.user_ptr[user + 1];
        match self.user_nbr[range.clone()].binary_search(&item) {
            Ok(k) => self.user_w[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn item_weight(&self, item: usize, user: usize) -> f64 {
        let range = self.item_ptr[item]..self.item_ptr[item + 1];
        match self.item_nbr[range.clone()].binary_search(&user) {
            Ok(k) => self.item_w[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// One application of `Â` to the stacked `[users; items]` matrix.
    fn step(&self, users: &Matrix, items: &Matrix) -> (Matrix, Matrix) {
        let dim = users.dim();
        let mut nu = Matrix::zeros(self.n_users, dim);
        let mut ni = Matrix::zeros(self.n_items, dim);
        for u in 0..self.n_users {
            let out = nu.row_mut(u);
            for e in self.user_ptr[u]..self.user_ptr[u + 1] {
                axpy(self.user_w[e], items.row(self.user_nbr[e]), out);
            }
        }
        for i in 0..self.n_items {
            let out = ni.row_mut(i);
            for e in self.item_ptr[i]..self.item_ptr[i + 1] {
                axpy(self.item_w[e], users.row(self.item_nbr[e]), out);
            }
        }
        (nu, ni)
    }

    /// Layer-averaged propagation `(1/(K+1)) Σ_{l=0..K} Â^l E`.
    ///
    /// `Â` is symmetric, so the same map sends a gradient on the output back
    /// to a gradient on the input.
    pub fn propagate(&self, users: &Matrix, items: &Matrix) -> (Matrix, Matrix) {
        assert_eq!(users.rows(), self.n_users, "user rows mismatch");
        assert_eq!(items.rows(), self.n_items, "item rows mismatch");
        let mut acc_u = users.clone();
        let mut acc_i = items.clone();
        if self.layers == 0 {
            return (acc_u, acc_i);
        }
        let mut cur = (users.clone(), items.clone());
        for _ in 0..self.layers {
            cur = self.step(&cur.0, &cur.1);
            acc_u.add_assign(&cur.0);
            acc_i.add_assign(&cur.1);
        }
        let a = 1.0 / (self.layers + 1) as f64;
        acc_u.scale(a);
        acc_i.scale(a);
        (acc_u, acc_i)
    }

    /// Nodes within `layers` hops of the seeds (seeds included).
    pub fn reach(&self, user_seeds: &[usize], item_seeds: &[usize]) -> (Vec<bool>, Vec<bool>) {
        let mut ru = vec![false; self.n_users];
        let mut ri = vec![false; self.n_items];
        let mut fu: Vec<usize> = Vec::new();
        let mut fi: Vec<usize> = Vec::new();
        for &u in user_seeds {
            if !ru[u] {
                ru[u] = true;
                fu.push(u);
            }
        }
        for &i in item_seeds {
            if !ri[i] {
                ri[i] = true;
                fi.push(i);
            }
        }
        for _ in 0..self.layers {
            let mut nu = Vec::new();
            let mut ni = Vec::new();
            for &u in &fu {
                for &i in &self.user_nbr[self.user_ptr[u]..self.user_ptr[u + 1]] {
                    if !ri[i] {
                        ri[i] = true;
                        ni.push(i);
                    }
                }
            }
            for &i in &fi {
                for &u in &self.item_nbr[self.item_ptr[i]..self.item_ptr[i + 1]] {
                    if !ru[u] {
                        ru[u] = true;
                        nu.push(u);
                    }
                }
            }
            fu = nu;
            fi = ni;
        }
        (ru, ri)
    }
}
