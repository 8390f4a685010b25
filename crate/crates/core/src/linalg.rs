//! Small dense solves used by the filter and baseline code.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Solves `a · x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Real>(mut a: Matrix<T>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve needs a square system, got {}x{} with rhs {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let scale = a.as_slice().iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().partial_cmp(&a.get(j, col).abs()).unwrap())
            .unwrap();
        if a.get(pivot, col).abs() <= tiny {
            return Err(Error::InvalidArgument("singular linear system".into()));
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot, j));
                a.set(pivot, j, tmp);
            }
            b.swap(col, pivot);
        }
        let p = a.get(col, col);
        for i in col + 1..n {
            let f = a.get(i, col) / p;
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = a.get(i, j) - f * a.get(col, j);
                a.set(i, j, v);
            }
            let bc = b[col];
            b[i] -= f * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a.get(i, j) * x[j];
        }
        x[i] = acc / a.get(i, i);
    }
    Ok(x)
}
