use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

/// Fills masked frames column-wise from the observed ones.
///
/// Cubic spline (not-a-knot ends) through the observed frames (frame index as abscissa), linear
/// interpolation when fewer than 4 frames are observed, and the nearest boundary value
/// outside the observed range. The returned matrix has an all-true mask.
pub fn interpolate_missing<T: Real>(m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let Some(mask) = &m.mask else {
        return Err(Error::InvalidArgument("interpolation needs a validity mask".into()));
    };
    let known: Vec<usize> = (0..m.frames()).filter(|&i| mask[i]).collect();
    if known.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "interpolation needs at least 2 observed frames, got {}",
            known.len()
        )));
    }
    let mut out = m.clone();
    out.mask = Some(vec![true; m.frames()]);
    if known.len() == m.frames() {
        return Ok(out);
    }
    let xs: Vec<T> = known.iter().map(|&i| T::from_usize_lossy(i)).collect();
    for j in 0..m.dim() {
        let ys: Vec<T> = known.iter().map(|&i| m.data.get(i, j)).collect();
        let curve = if known.len() >= 4 {
            Curve::Spline(CubicSpline::fit(&xs, &ys))
        } else {
            Curve::Linear
        };
        for i in (0..m.frames()).filter(|&i| !mask[i]) {
            let v = if i < known[0] {
                ys[0]
            } else if i > known[known.len() - 1] {
                ys[ys.len() - 1]
            } else {
                let x = T::from_usize_lossy(i);
                match &curve {
                    Curve::Spline(s) => s.eval(x),
                    Curve::Linear => linear(&xs, &ys, x),
                }
            };
            out.data.set(i, j, v);
        }
    }
    Ok(out)
}

enum Curve<T> {
    Spline(CubicSpline<T>),
    Linear,
}

fn interval<T: Real>(xs: &[T], x: T) -> usize {
    // index k with xs[k] <= x <= xs[k+1]
    match xs.iter().position(|&v| v > x) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => xs.len() - 2,
    }
}

fn linear<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let k = interval(xs, x);
    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

struct CubicSpline<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    /// second derivatives at the knots
    m: Vec<T>,
}

impl<T: Real> CubicSpline<T> {
    /// Not-a-knot end conditions (third derivative continuous across the second and
    /// penultimate knots). Needs at least 4 knots; exact on cubic data.
    fn fit(xs: &[T], ys: &[T]) -> Self {
        let n = xs.len();
        debug_assert!(n >= 4);
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        // unknowns are m[1..n-1]; m[0] and m[n-1] are eliminated through the end conditions
        let k = n - 2;
        let mut lower = vec![T::zero(); k];
        let mut diag = vec![T::zero(); k];
        let mut upper = vec![T::zero(); k];
        let mut rhs = vec![T::zero(); k];
        for i in 1..n - 1 {
            lower[i - 1] = h[i - 1];
            diag[i - 1] = two * (h[i - 1] + h[i]);
            upper[i - 1] = h[i];
            rhs[i - 1] = six * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        let (h0, h1) = (h[0], h[1]);
        diag[0] = (h0 + h1) * (h0 + two * h1) / h1;
        upper[0] = (h1 * h1 - h0 * h0) / h1;
        lower[0] = T::zero();
        let (a, b) = (h[n - 3], h[n - 2]);
        lower[k - 1] = (a * a - b * b) / a;
        diag[k - 1] = (a + b) * (two * a + b) / a;
        upper[k - 1] = T::zero();

        for i in 1..k {
            let w = lower[i] / diag[i - 1];
            let du = upper[i - 1];
            diag[i] -= w * du;
            let prev = rhs[i - 1];
            rhs[i] -= w * prev;
        }
        let mut m = vec![T::zero(); n];
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
        }
        m[0] = ((h0 + h1) * m[1] - h0 * m[2]) / h1;
        m[n - 1] = ((a + b) * m[n - 2] - b * m[n - 3]) / a;
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        }
    }

    fn eval(&self, x: T) -> T {
        let k = interval(&self.xs, x);
        let h = self.xs[k + 1] - self.xs[k];
        let a = (self.xs[k + 1] - x) / h;
        let b = (x - self.xs[k]) / h;
        let six = T::lit(6.0);
        a * self.ys[k]
            + b * self.ys[k + 1]
            + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / six
    }
}
