use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::matrix::{dot, Matrix};
use crate::scalar::Real;
use crate::sdfm::{self, Section};

/// Principal axes retained to reach a target fraction of explained variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// `k x n`, orthonormal rows sorted by decreasing variance
    pub components: Matrix<T>,
    pub explained_variance_ratio: Vec<T>,
    pub target_variance: f64,
}

/// Fits PCA on stacked frames (one frame per row), keeping the smallest number of components
/// whose cumulative explained variance reaches `target_variance`.
///
/// The eigen-decomposition of the covariance runs in `f64` regardless of `T`.
pub fn fit_pca<T: Real>(frames: &Matrix<T>, target_variance: f64) -> Result<PcaModel<T>> {
    if !(target_variance > 0.0 && target_variance <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target variance must lie in (0, 1], got {target_variance}"
        )));
    }
    let (rows, n) = frames.shape();
    if rows < 2 || n == 0 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 rows, got {rows}")));
    }
    let mut mean = vec![0.0f64; n];
    for r in frames.row_iter() {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v.to_f64_lossy();
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);

    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut centered = vec![0.0f64; n];
    for r in frames.row_iter() {
        for ((c, &v), &m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = v.to_f64_lossy() - m;
        }
        for a in 0..n {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..n {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            let v = cov[(a, b)] / (rows - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArgument("PCA input has zero variance (rank 0)".into()));
    }
    let ratios: Vec<f64> = values.iter().map(|v| v / total).collect();
    let mut cumulative = 0.0;
    let mut k = n;
    for (i, r) in ratios.iter().enumerate() {
        cumulative += r;
        if cumulative >= target_variance - 1e-12 {
            k = i + 1;
            break;
        }
    }

    let mut components = Matrix::zeros(k, n);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        // sign convention: largest-magnitude entry positive
        let pivot = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            components.set(row, j, T::lit(sign * v[j]));
        }
    }
    Ok(PcaModel {
        mean: mean.into_iter().map(T::lit).collect(),
        components,
        explained_variance_ratio: ratios[..k].iter().map(|&r| T::lit(r)).collect(),
        target_variance,
    })
}

impl<T: Real> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project_row(&self, row: &[T]) -> Vec<T> {
        let centered: Vec<T> = row.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        self.components.mul_vec(&centered)
    }

    pub fn reconstruct_row(&self, projected: &[T]) -> Vec<T> {
        let mut out = self.components.tr_mul_vec(projected);
        out.iter_mut().zip(&self.mean).for_each(|(o, &m)| *o += m);
        out
    }

    pub fn to_sections(&self) -> Vec<Section> {
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        vec![
            Section::f64("mean", 1, self.input_dim(), f(&self.mean)),
            Section::f64(
                "components",
                self.n_components(),
                self.input_dim(),
                f(self.components.as_slice()),
            ),
            Section::f64("ratios", 1, self.n_components(), f(&self.explained_variance_ratio)),
            Section::f64("target_variance", 1, 1, vec![self.target_variance]),
        ]
    }

    pub fn from_sections(sections: &[Section]) -> Result<Self> {
        let get = |name: &str| {
            sdfm::find_section(sections, name)
                .and_then(Section::as_f64)
                .ok_or_else(|| Error::Config(format!("PCA model lacks numeric section {name}")))
        };
        let (_, n, mean) = get("mean")?;
        let (k, cols, comps) = get("components")?;
        let (_, _, ratios) = get("ratios")?;
        let (_, _, target) = get("target_variance")?;
        if cols != n || ratios.len() != k || target.len() != 1 {
            return Err(Error::Shape("inconsistent PCA sections".into()));
        }
        let lit = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        Ok(Self {
            mean: lit(mean),
            components: Matrix::from_vec(k, n, lit(comps))?,
            explained_variance_ratio: lit(ratios),
            target_variance: target[0],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        sdfm::write_sections(path, &self.to_sections())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_sections(&sdfm::read_sections(path)?)
    }
}

/// Projects every frame onto the retained components; the result is tagged `visual_pca`.
pub fn apply_pca<T: Real>(model: &PcaModel<T>, m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if m.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "PCA expects {} features, matrix has {}",
            model.input_dim(),
            m.dim()
        )));
    }
    let mut out = Matrix::zeros(m.frames(), model.n_components());
    for (i, r) in m.data.row_iter().enumerate() {
        out.row_mut(i).copy_from_slice(&model.project_row(r));
    }
    FeatureMatrix::new(out, Modality::VisualPca, m.frame_rate, m.mask.clone())
}

/// Largest absolute pairwise deviation of `components · componentsᵀ` from the identity.
pub fn orthonormality_error<T: Real>(components: &Matrix<T>) -> f64 {
    let k = components.rows();
    let mut worst = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            let target = if a == b { 1.0 } else { 0.0 };
            let d = dot(components.row(a), components.row(b)).to_f64_lossy();
            worst = worst.max((d - target).abs());
        }
    }
    worst
}
