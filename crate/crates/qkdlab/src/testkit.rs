//! Shared helpers for unit tests.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Haar-ish random unitary via Gram-Schmidt on a random complex matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<Complex64> {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        for prev in &cols {
            let overlap: Complex64 = prev.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(prev) {
                *x -= overlap * y;
            }
        }
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        cols.push(v);
    }
    DMatrix::from_fn(dim, dim, |i, j| cols[j][i])
}
