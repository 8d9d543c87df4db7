//! Gauss-Jacobi quadrature on `[0, 1]` for the weight `x^p (1-x)^q`.
//!
//! Nodes and weights come from the Golub-Welsch eigenproblem of the Jacobi
//! recurrence. Weights are normalized to sum to one, so a rule computes
//! expectations under the beta(p+1, q+1) law; the endpoint singularities of
//! the weight never meet a function evaluation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiRule {
    p: f64,
    q: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl JacobiRule {
    /// `size`-point rule, exact for polynomials of degree `< 2 * size`.
    pub fn new(size: usize, p: f64, q: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && p > -1.0 && q > -1.0) {
            return Err(Error::InvalidMeasure(format!(
                "endpoint exponents must exceed -1, got p={p}, q={q}"
            )));
        }
        if size == 0 {
            return Err(Error::ZeroSize);
        }
        // Jacobi polynomials on [-1, 1] with weight (1-t)^alpha (1+t)^beta;
        // x = (1+t)/2 turns x^p (1-x)^q into alpha = q, beta = p.
        let (alpha, beta) = (q, p);
        let ab = alpha + beta;
        let mut jm = DMatrix::<f64>::zeros(size, size);
        for i in 0..size {
            let n = i as f64;
            let diag = if i == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * n + ab) * (2.0 * n + ab + 2.0))
            };
            jm[(i, i)] = diag;
            if i + 1 < size {
                let m = n + 1.0;
                let off_sq = if i == 0 {
                    4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * m * (m + alpha) * (m + beta) * (m + ab)
                        / ((2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0))
                };
                let off = off_sq.sqrt();
                jm[(i, i + 1)] = off;
                jm[(i + 1, i)] = off;
            }
        }
        let eig = SymmetricEigen::new(jm);
        let mut pairs: Vec<(f64, f64)> = (0..size)
            .map(|j| {
                let t = eig.eigenvalues[j];
                let v0 = eig.eigenvectors[(0, j)];
                ((1.0 + t) / 2.0, v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|w| w.1).sum();
        Ok(Self {
            p,
            q,
            nodes: pairs.iter().map(|w| w.0.clamp(0.0, 1.0)).collect(),
            weights: pairs.iter().map(|w| w.1 / total).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.q)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ beta(p+1, q+1)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
