//! Chebyshev–Gauss–Lobatto collocation on [0, L].

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Collocation grid with its first-derivative matrix.
#[derive(Debug, Clone)]
pub struct ChebyshevGrid {
    /// Ascending nodes, `nodes[0] = 0` and `nodes[n-1] = length`.
    pub nodes: Vec<f64>,
    /// `n × n` derivative matrix in z.
    pub diff: DMatrix<f64>,
    /// Clenshaw–Curtis quadrature weights on the nodes.
    pub weights: Vec<f64>,
    pub length: f64,
}

/// First-derivative collocation matrix on `n_z` Gauss–Lobatto points mapped to
/// `[0, cell_length]`.
pub fn chebyshev_diff_matrix(n_z: usize, cell_length: f64) -> Result<ChebyshevGrid> {
    if n_z < 2 {
        return Err(Error::domain(format!("need at least 2 collocation points, got {n_z}")));
    }
    if !(cell_length > 0.0) {
        return Err(Error::domain("cell length must be positive"));
    }
    let n = n_z - 1;
    // x_k = cos(πk/n) runs from +1 to -1; z = L(1 - x)/2 ascends.
    let x: Vec<f64> = (0..=n).map(|k| (PI * k as f64 / n as f64).cos()).collect();
    let c: Vec<f64> = (0..=n)
        .map(|k| {
            let edge = if k == 0 || k == n { 2.0 } else { 1.0 };
            if k % 2 == 0 { edge } else { -edge }
        })
        .collect();
    let scale = -2.0 / cell_length;
    let mut diff = DMatrix::<f64>::zeros(n_z, n_z);
    for i in 0..=n {
        let mut row_sum = 0.0;
        for j in 0..=n {
            if i != j {
                let d = c[i] / c[j] / (x[i] - x[j]);
                diff[(i, j)] = scale * d;
                row_sum += d;
            }
        }
        // negative-sum trick keeps D·1 = 0 to rounding
        diff[(i, i)] = -scale * row_sum;
    }
    let nodes: Vec<f64> = x.iter().map(|xi| cell_length * (1.0 - xi) / 2.0).collect();
    let weights = clenshaw_curtis(n)
        .into_iter()
        .map(|w| w * cell_length / 2.0)
        .collect();
    Ok(ChebyshevGrid { nodes, diff, weights, length: cell_length })
}

/// Clenshaw–Curtis weights on cos(πk/n), k = 0..=n, for ∫_{-1}^{1}.
fn clenshaw_curtis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0, 1.0];
    }
    let nf = n as f64;
    let end = if n % 2 == 0 { 1.0 / (nf * nf - 1.0) } else { 1.0 / (nf * nf) };
    let mut w = vec![end; n + 1];
    for (k, wk) in w.iter_mut().enumerate().take(n).skip(1) {
        let theta = PI * k as f64 / nf;
        let mut v = 1.0;
        for j in 1..=(n - 1) / 2 {
            let jf = j as f64;
            v -= 2.0 * (2.0 * jf * theta).cos() / (4.0 * jf * jf - 1.0);
        }
        if n % 2 == 0 {
            v -= (nf * theta).cos() / (nf * nf - 1.0);
        }
        *wk = 2.0 * v / nf;
    }
    w
}

impl ChebyshevGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.diff[(i, j)] * f[j]).sum())
            .collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Solves F' = f on the interior nodes with F(0) = 0. The returned
    /// `(n-1) × (n-1)` matrix maps f at nodes 1.. to F at nodes 1...
    pub fn antiderivative(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        let inner = self.diff.view((1, 1), (n - 1, n - 1)).into_owned();
        inner
            .try_inverse()
            .ok_or_else(|| Error::domain("singular collocation system"))
    }
}
