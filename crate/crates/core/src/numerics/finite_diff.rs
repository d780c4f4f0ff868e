use ndarray::{Array1, Array2, ArrayView1};

use super::Real;

/// Default central-difference step for 64-bit checks.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference Jacobian of `f` at `z`, shape `(out, in)`.
pub fn central_jacobian<T, F>(f: F, z: ArrayView1<T>, h: T) -> Array2<T>
where
    T: Real,
    F: Fn(ArrayView1<T>) -> Array1<T>,
{
    let n = z.len();
    let mut cols = Vec::with_capacity(n);
    let mut probe = z.to_owned();
    for j in 0..n {
        let orig = probe[j];
        probe[j] = orig + h;
        let plus = f(probe.view());
        probe[j] = orig - h;
        let minus = f(probe.view());
        probe[j] = orig;
        cols.push((plus - minus) / (h + h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    Array2::from_shape_fn((m, n), |(i, j)| cols[j][i])
}

/// Largest norm-wise relative error `‖A − FD‖_F / ‖FD‖_F` over `points`
/// between the analytic Jacobian `jac` and central differences of `f`.
///
/// Falls back to the absolute error where the reference is numerically zero.
pub fn max_relative_error<T, F, G>(f: F, jac: G, points: &[Array1<T>], h: T) -> T
where
    T: Real,
    F: Fn(ArrayView1<T>) -> Array1<T>,
    G: Fn(ArrayView1<T>) -> Array2<T>,
{
    let floor = T::lit(1e-12);
    points.iter().fold(T::zero(), |worst, z| {
        let reference = central_jacobian(&f, z.view(), h);
        let analytic = jac(z.view());
        let diff = (&analytic - &reference).mapv(|v| v * v).sum().sqrt();
        let scale = reference.mapv(|v| v * v).sum().sqrt();
        let err = if scale > floor { diff / scale } else { diff };
        worst.max(err)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn square(z: ArrayView1<f64>) -> Array1<f64> {
        z.mapv(|v| v * v)
    }

    fn square_grad(z: ArrayView1<f64>) -> Array2<f64> {
        Array2::from_diag(&z.mapv(|v| 2.0 * v))
    }

    #[test]
    fn exact_gradient_passes() {
        let pts = vec![array![0.3], array![-2.0], array![5.5]];
        assert!(max_relative_error(square, square_grad, &pts, FD_STEP) < 1e-9);
    }

    #[test]
    fn scaled_gradient_is_detected() {
        let pts = vec![array![0.3], array![-2.0]];
        let err = max_relative_error(square, |z| square_grad(z) * 2.0, &pts, FD_STEP);
        assert!((err - 1.0).abs() < 1e-6);
    }
}
