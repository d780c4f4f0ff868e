//! Small dense routines for metric tensors (dimension = latent size).

use ndarray::{Array1, Array2, ArrayView2};

use super::Real;
use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix, ordered by decreasing
/// magnitude so that it doubles as an SVD (`U = V` up to column signs).
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    /// Eigenvectors as columns.
    pub vectors: Array2<T>,
}

/// Cyclic Jacobi rotations.
pub fn symmetric_eigen<T: Real>(m: ArrayView2<T>) -> Result<SymmetricEigen<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::ShapeMismatch(format!("eigen of non-square {:?}", m.dim())));
    }
    let mut a = m.to_owned();
    let mut v = Array2::<T>::eye(n);
    let scale = a.iter().fold(T::zero(), |s, x| s.max(x.abs()));
    let tol = T::epsilon() * scale * T::lit(1e-2);

    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[[p, q]].abs());
            }
        }
        if off <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (apq + apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[[j, j]]
            .abs()
            .partial_cmp(&a[[i, i]].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    Ok(SymmetricEigen { values, vectors })
}

/// Determinant by LU with partial pivoting.
pub fn determinant<T: Real>(m: ArrayView2<T>) -> Result<T> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::ShapeMismatch(format!("determinant of non-square {:?}", m.dim())));
    }
    match n {
        0 => return Ok(T::one()),
        1 => return Ok(m[[0, 0]]),
        2 => return Ok(m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]]),
        _ => {}
    }
    let mut a = m.to_owned();
    let mut det = T::one();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[[i, col]]
                    .abs()
                    .partial_cmp(&a[[j, col]].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        if a[[pivot, col]] == T::zero() {
            return Ok(T::zero());
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
            }
            det = -det;
        }
        let p = a[[col, col]];
        det *= p;
        for r in col + 1..n {
            let f = a[[r, col]] / p;
            for k in col..n {
                let v = a[[col, k]];
                a[[r, k]] -= f * v;
            }
        }
    }
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_input() {
        let e = symmetric_eigen(array![[1.0, 0.0], [0.0, 4.0]].view()).unwrap();
        assert_eq!(e.values, array![4.0, 1.0]);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let b: Array2<f64> = array![[1.0, 2.0, -0.5], [0.3, -1.0, 2.0], [0.7, 0.1, 0.4]];
        let m = b.t().dot(&b);
        let e = symmetric_eigen(m.view()).unwrap();
        let rec = e.vectors.dot(&Array2::from_diag(&e.values)).dot(&e.vectors.t());
        assert!((&rec - &m).iter().all(|d| d.abs() < 1e-12));
        let vtv = e.vectors.t().dot(&e.vectors);
        assert!((&vtv - &Array2::<f64>::eye(3)).iter().all(|d| d.abs() < 1e-12));
        assert!(e.values[0].abs() >= e.values[1].abs() && e.values[1].abs() >= e.values[2].abs());
        let prod: f64 = e.values.iter().product();
        assert!((prod - determinant(m.view()).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn determinant_with_pivoting() {
        let m: Array2<f64> = array![[0.0, 2.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, 3.0]];
        assert!((determinant(m.view()).unwrap() + 6.0).abs() < 1e-14);
    }
}
