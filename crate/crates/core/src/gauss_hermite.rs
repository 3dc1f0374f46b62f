//! Gauss-Hermite quadrature nodes and weights for integrals of the form
//! `int f(x) exp(-x^2) dx`, computed by diagonalizing the Jacobi matrix of
//! the Hermite recurrence (Golub-Welsch). Exact for polynomials up to
//! degree 2n-1.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Nodes and weights for n-point Gauss-Hermite quadrature, nodes ascending.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 512 {
        return Err(CoreError::InvalidParameter(format!(
            "gauss_hermite order {n} outside 1..=512"
        )));
    }
    // Jacobi matrix: zero diagonal, off-diagonal beta_k = sqrt(k/2).
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(j);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &i in &order {
        nodes.push(eig.eigenvalues[i]);
        let v0 = eig.eigenvectors[(0, i)];
        weights.push(SQRT_PI * v0 * v0);
    }
    Ok((nodes, weights))
}

/// Evaluate `int f(x) exp(-x^2) dx` with the given order.
pub fn integrate<F: Fn(f64) -> f64>(n: usize, f: F) -> Result<f64> {
    let (nodes, weights) = gauss_hermite(n)?;
    Ok(nodes.iter().zip(&weights).map(|(&x, &w)| w * f(x)).sum())
}
