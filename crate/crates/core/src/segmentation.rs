//! Fixed-length cropping and s-way segmentation of feature matrices.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// `s` consecutive, equally long blocks of frames (`s x l/s x n`), stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentedTensor<T> {
    data: Vec<T>,
    segments: usize,
    segment_len: usize,
    dim: usize,
}

impl<T: Real> SegmentedTensor<T> {
    pub fn from_parts(data: Vec<T>, segments: usize, segment_len: usize, dim: usize) -> Result<Self> {
        if segments == 0 || segment_len == 0 || dim == 0 {
            return Err(Error::Shape("segmented tensor dimensions must be positive".into()));
        }
        if data.len() != segments * segment_len * dim {
            return Err(Error::Shape(format!(
                "{} values for shape ({segments}, {segment_len}, {dim})",
                data.len()
            )));
        }
        Ok(Self {
            data,
            segments,
            segment_len,
            dim,
        })
    }

    /// `(s, l/s, n)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.segments, self.segment_len, self.dim)
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `l/s x n` block of segment `j`.
    pub fn segment(&self, j: usize) -> &[T] {
        let size = self.segment_len * self.dim;
        &self.data[j * size..(j + 1) * size]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Concatenates the segments back into an `l x n` matrix.
    pub fn flatten(&self) -> Matrix<T> {
        Matrix::from_vec(self.segments * self.segment_len, self.dim, self.data.clone())
            .expect("shape invariant")
    }

    /// Reorders segments: output segment `j` is input segment `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &j in order {
            data.extend_from_slice(self.segment(j));
        }
        Self { data, ..*self }
    }
}

/// Center-crops or zero-pads to exactly `l` frames. An odd remainder goes to the right: the
/// extra discarded frame when cropping, the extra zero frame when padding. Padded frames are
/// marked observed in the mask, if any.
pub fn crop_or_pad<T: Real>(m: &FeatureMatrix<T>, l: usize) -> Result<FeatureMatrix<T>> {
    if l < 1 {
        return Err(Error::InvalidArgument("crop length must be at least 1".into()));
    }
    let t = m.frames();
    let n = m.dim();
    if t == l {
        return Ok(m.clone());
    }
    let (data, mask) = if t > l {
        let start = (t - l) / 2;
        let rows = m.data.as_slice()[start * n..(start + l) * n].to_vec();
        let mask = m.mask.as_ref().map(|mk| mk[start..start + l].to_vec());
        (rows, mask)
    } else {
        let left = (l - t) / 2;
        let mut rows = vec![T::zero(); l * n];
        rows[left * n..(left + t) * n].copy_from_slice(m.data.as_slice());
        let mask = m.mask.as_ref().map(|mk| {
            let mut out = vec![true; l];
            out[left..left + t].copy_from_slice(mk);
            out
        });
        (rows, mask)
    };
    FeatureMatrix::new(Matrix::from_vec(l, n, data)?, m.modality, m.frame_rate, mask)
}

/// Splits an `l`-frame matrix into `s` consecutive segments of `l/s` frames.
pub fn segment_stack<T: Real>(m: &FeatureMatrix<T>, s: usize) -> Result<SegmentedTensor<T>> {
    let l = m.frames();
    if s == 0 || l % s != 0 {
        return Err(Error::InvalidArgument(format!(
            "segment count {s} does not divide the crop length {l}"
        )));
    }
    SegmentedTensor::from_parts(m.data.as_slice().to_vec(), s, l / s, m.dim())
}

/// `crop_or_pad` followed by `segment_stack`.
pub fn prepare_stream<T: Real>(m: &FeatureMatrix<T>, l: usize, s: usize) -> Result<SegmentedTensor<T>> {
    if s == 0 || l % s != 0 {
        return Err(Error::InvalidArgument(format!(
            "segment count {s} does not divide the crop length {l}"
        )));
    }
    segment_stack(&crop_or_pad(m, l)?, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Modality;
    use proptest::prelude::*;

    fn ramp(t: usize, n: usize) -> FeatureMatrix<f64> {
        let data = Matrix::from_fn(t, n, |i, j| (i * 10 + j) as f64 + 1.0);
        FeatureMatrix::new(data, Modality::AudioMfcc, 100.0, None).unwrap()
    }

    #[test]
    fn crop_keeps_centered_window() {
        let out = crop_or_pad(&ramp(300, 1), 128).unwrap();
        assert_eq!(out.frames(), 128);
        assert_eq!(out.data.get(0, 0), 861.0);
        assert_eq!(out.data.get(127, 0), 2131.0);
    }

    #[test]
    fn odd_surplus_drops_extra_frame_on_right() {
        let out = crop_or_pad(&ramp(5, 1), 2).unwrap();
        // frames 1 and 2 of 0..5
        assert_eq!(out.data.column(0), vec![11.0, 21.0]);
    }

    #[test]
    fn pad_is_symmetric_with_extra_on_right() {
        let out = crop_or_pad(&ramp(100, 2), 128).unwrap();
        let zero_rows: Vec<usize> = (0..128).filter(|&i| out.data.row(i).iter().all(|&v| v == 0.0)).collect();
        assert_eq!(zero_rows, (0..14).chain(114..128).collect::<Vec<_>>());
        let odd = crop_or_pad(&ramp(3, 1), 6).unwrap();
        assert_eq!(odd.data.column(0), vec![0.0, 1.0, 11.0, 21.0, 0.0, 0.0]);
    }

    #[test]
    fn same_length_is_identity() {
        let m = ramp(40, 3);
        assert_eq!(crop_or_pad(&m, 40).unwrap(), m);
    }

    #[test]
    fn default_stream_shapes() {
        let audio = prepare_stream(&ramp(300, 256), 128, 4).unwrap();
        assert_eq!(audio.shape(), (4, 32, 256));
        let visual = prepare_stream(&ramp(190, 67), 210, 7).unwrap();
        assert_eq!(visual.shape(), (7, 30, 67));
    }

    #[test]
    fn single_segment_is_whole_matrix() {
        let m = ramp(12, 2);
        let st = segment_stack(&m, 1).unwrap();
        assert_eq!(st.segment(0), m.data.as_slice());
    }

    #[test]
    fn errors() {
        assert!(crop_or_pad(&ramp(5, 1), 0).is_err());
        assert!(segment_stack(&ramp(10, 1), 3).is_err());
        assert!(segment_stack(&ramp(10, 1), 0).is_err());
    }

    proptest! {
        #[test]
        fn crop_pad_segment_laws(t in 1usize..300, s in 1usize..8, per in 1usize..40, n in 1usize..4) {
            let l = s * per;
            let m = ramp(t, n);
            let cropped = crop_or_pad(&m, l).unwrap();
            prop_assert_eq!(cropped.frames(), l);
            let st = segment_stack(&cropped, s).unwrap();
            prop_assert_eq!(st.shape(), (s, per, n));
            prop_assert_eq!(st.flatten(), cropped.data.clone());
            if t < l {
                // every input frame survives and the padding carries no mass
                let left = (l - t) / 2;
                let pad_mass: f64 = (0..l)
                    .filter(|&i| i < left || i >= left + t)
                    .flat_map(|i| cropped.data.row(i).to_vec())
                    .map(f64::abs)
                    .sum();
                prop_assert_eq!(pad_mass, 0.0);
            }
        }
    }
}
