use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::solve;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Least-squares weights that evaluate, at `at`, the degree-`order` polynomial fitted to
/// samples taken at `offsets`.
fn fit_weights<T: Real>(offsets: &[T], order: usize, at: T) -> Result<Vec<T>> {
    // offsets are rescaled to [-1, 1] to keep the normal equations well conditioned
    let scale = offsets.iter().fold(T::one(), |m, &x| m.max(x.abs()));
    let xs: Vec<T> = offsets.iter().map(|&x| x / scale).collect();
    let at = at / scale;
    let p = order + 1;
    let vander = Matrix::from_fn(xs.len(), p, |i, j| xs[i].powi(j as i32));
    let gram = Matrix::from_fn(p, p, |a, b| (0..xs.len()).map(|i| vander.get(i, a) * vander.get(i, b)).sum());
    let target: Vec<T> = (0..p).map(|j| at.powi(j as i32)).collect();
    let c = solve(gram, target)?;
    Ok(vander.mul_vec(&c))
}

/// Centered smoothing weights for a window of `window` samples (offsets `-h..=h`).
pub fn savgol_coefficients<T: Real>(window: usize, order: usize) -> Result<Vec<T>> {
    check_params(window, order)?;
    let h = (window / 2) as i64;
    let offsets: Vec<T> = (-h..=h).map(|o| T::lit(o as f64)).collect();
    fit_weights(&offsets, order, T::zero())
}

fn check_params(window: usize, order: usize) -> Result<()> {
    if window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("Savitzky-Golay window must be odd, got {window}")));
    }
    if order >= window {
        return Err(Error::InvalidArgument(format!(
            "polynomial order {order} must be below the window length {window}"
        )));
    }
    Ok(())
}

/// Column-wise Savitzky-Golay smoothing.
///
/// Interior frames use the centered window. The first and last `window / 2` frames are
/// evaluated from one polynomial fitted to the first (last) `window` frames, so the output
/// keeps the input length.
pub fn savgol_smooth<T: Real>(m: &FeatureMatrix<T>, window: usize, order: usize) -> Result<FeatureMatrix<T>> {
    check_params(window, order)?;
    let t = m.frames();
    if window > t {
        return Err(Error::InvalidArgument(format!("window {window} exceeds {t} frames")));
    }
    if !m.fully_observed() {
        return Err(Error::InvalidArgument(
            "smoothing needs every frame observed; interpolate first".into(),
        ));
    }
    let h = window / 2;
    let center = savgol_coefficients::<T>(window, order)?;
    let edge_offsets: Vec<T> = (0..window).map(|o| T::from_usize_lossy(o)).collect();
    let head: Vec<Vec<T>> = (0..h)
        .map(|i| fit_weights(&edge_offsets, order, T::from_usize_lossy(i)))
        .collect::<Result<_>>()?;

    let mut out = Matrix::zeros(t, m.dim());
    for j in 0..m.dim() {
        let col = m.data.column(j);
        for i in 0..t {
            let v = if i < h {
                dot(&head[i], &col[..window])
            } else if i + h >= t {
                // mirror of the head weights over the last window
                let k = t - 1 - i;
                let tail = &col[t - window..];
                head[k].iter().zip(tail.iter().rev()).fold(T::zero(), |a, (&w, &x)| a + w * x)
            } else {
                dot(&center, &col[i - h..=i + h])
            };
            out.set(i, j, v);
        }
    }
    Ok(m.with_data(out))
}

fn dot<T: Real>(w: &[T], x: &[T]) -> T {
    w.iter().zip(x).fold(T::zero(), |a, (&w, &x)| a + w * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Modality;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column(values: Vec<f64>) -> FeatureMatrix<f64> {
        let n = values.len();
        FeatureMatrix::new(Matrix::from_vec(n, 1, values).unwrap(), Modality::VisualFace, 30.0, None).unwrap()
    }

    #[test]
    fn tabulated_five_point_quadratic() {
        let c = savgol_coefficients::<f64>(5, 2).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_signal_unchanged() {
        let out = savgol_smooth(&column(vec![2.5; 40]), 11, 3).unwrap();
        assert!(out.data.as_slice().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn reproduces_cubic_including_edges() {
        let f = |x: f64| 0.001 * x.powi(3) - 0.05 * x * x + 0.7 * x + 2.0;
        let values: Vec<f64> = (0..60).map(|i| f(i as f64)).collect();
        let out = savgol_smooth(&column(values.clone()), 11, 3).unwrap();
        for (a, b) in out.data.column(0).iter().zip(&values) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn reduces_white_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let out = savgol_smooth(&column(values.clone()), 11, 3).unwrap();
        assert!(var(&out.data.column(0)) < var(&values));
    }

    #[test]
    fn parameter_errors() {
        let m = column(vec![0.0; 20]);
        assert!(savgol_smooth(&m, 10, 3).is_err());
        assert!(savgol_smooth(&m, 5, 5).is_err());
        assert!(savgol_smooth(&column(vec![0.0; 9]), 11, 3).is_err());
    }
}
