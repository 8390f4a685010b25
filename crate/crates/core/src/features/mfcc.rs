use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cmvn, FeatureMatrix, Modality};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// MFCC front-end settings. Window and hop are in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub window_length: f64,
    pub hop_length: f64,
    pub apply_cmvn: bool,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            n_mels: 256,
            n_coeffs: 256,
            window_length: 0.025,
            hop_length: 0.010,
            apply_cmvn: false,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_length * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_length * self.sample_rate as f64).round() as usize
    }

    /// FFT size: the window length rounded up to a power of two.
    pub fn n_fft(&self) -> usize {
        self.window_samples().next_power_of_two()
    }

    /// Number of frames produced for `n` samples.
    pub fn frame_count(&self, n: usize) -> usize {
        n.div_ceil(self.hop_samples())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= n_coeffs ({}) <= n_mels ({})",
                self.n_coeffs, self.n_mels
            )));
        }
        if self.hop_samples() == 0 || self.window_samples() < self.hop_samples() {
            return Err(Error::InvalidArgument(format!(
                "need window ({} samples) >= hop ({} samples) > 0",
                self.window_samples(),
                self.hop_samples()
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidArgument("log floor must be positive".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-mel filterbank, `n_mels` rows by `n_fft / 2 + 1` frequency bins,
/// spanning 0 Hz to Nyquist. Filters narrower than a bin come out all-zero.
pub fn mel_filterbank<T: Real>(sample_rate: u32, n_fft: usize, n_mels: usize) -> Matrix<T> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    Matrix::from_fn(n_mels, n_bins, |m, k| {
        let f = k as f64 * sample_rate as f64 / n_fft as f64;
        let rise = (f - edges[m]) / (edges[m + 1] - edges[m]);
        let fall = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
        T::lit(rise.min(fall).max(0.0))
    })
}

fn hann<T: Real>(n: usize) -> Vec<T> {
    // periodic Hann, the convention of spectral front-ends
    (0..n)
        .map(|i| T::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Orthonormal DCT-II basis, `n_out` rows by `n_in` columns.
fn dct_basis<T: Real>(n_in: usize, n_out: usize) -> Matrix<T> {
    let n = n_in as f64;
    Matrix::from_fn(n_out, n_in, |k, i| {
        let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        T::lit(s * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
    })
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period.max(1));
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Mel-frequency cepstral coefficients of a mono waveform.
///
/// Frame `i` is centered on sample `i * hop` (reflect padding at both ends), giving
/// `ceil(N / hop)` frames. Each frame is Hann-windowed, zero-padded to `n_fft`, turned into
/// a power spectrum, projected on the mel filterbank, log-compressed with a floor and
/// decorrelated with an orthonormal DCT-II; the first `n_coeffs` coefficients are kept.
pub fn compute_mfcc<T: Real>(waveform: &[T], sample_rate: u32, config: &MfccConfig) -> Result<FeatureMatrix<T>> {
    config.validate()?;
    if sample_rate != config.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "waveform is sampled at {sample_rate} Hz but the MFCC config expects {} Hz",
            config.sample_rate
        )));
    }
    let win = config.window_samples();
    let hop = config.hop_samples();
    let n = waveform.len();
    if n < win {
        return Err(Error::InvalidArgument(format!(
            "waveform has {n} samples, shorter than one {win}-sample window"
        )));
    }
    if waveform.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("waveform samples".into()));
    }
    let n_fft = config.n_fft();
    let frames = config.frame_count(n);
    let window = hann::<T>(win);
    let fbank = mel_filterbank::<T>(config.sample_rate, n_fft, config.n_mels);
    let dct = dct_basis::<T>(config.n_mels, config.n_coeffs);
    let floor = T::lit(config.log_floor);
    let fft = FftPlanner::<T>::new().plan_fft_forward(n_fft);

    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
    let mut power = vec![T::zero(); n_fft / 2 + 1];
    let mut out = Matrix::zeros(frames, config.n_coeffs);
    let half = (win / 2) as isize;
    for f in 0..frames {
        let start = (f * hop) as isize - half;
        buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
        for (k, &w) in window.iter().enumerate() {
            let s = waveform[reflect(start + k as isize, n)];
            buf[k] = Complex::new(s * w, T::zero());
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        let log_mel: Vec<T> = fbank.mul_vec(&power).into_iter().map(|e| e.max(floor).ln()).collect();
        out.row_mut(f).copy_from_slice(&dct.mul_vec(&log_mel));
    }
    let m = FeatureMatrix::new(out, Modality::AudioMfcc, 1.0 / config.hop_length, None)?;
    if config.apply_cmvn {
        cmvn(&m)
    } else {
        Ok(m)
    }
}

/// Reads a mono (first channel) WAV file as samples in [-1, 1].
pub fn read_wav(path: &std::path::Path) -> Result<(Vec<f32>, u32)> {
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| fail(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fail(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fail(e.to_string()))?
        }
    };
    Ok((samples.into_iter().step_by(channels).collect(), spec.sample_rate))
}

pub fn write_wav(path: &std::path::Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let fail = |e: hound::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in samples {
        w.write_sample(s).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_at_ten_ms_hop_is_100_frames() {
        let cfg = MfccConfig::default();
        let wave: Vec<f64> = (0..16_000).map(|i| (i as f64 * 0.05).sin()).collect();
        let m = compute_mfcc(&wave, 16_000, &cfg).unwrap();
        assert_eq!(m.data.shape(), (100, 256));
        assert_eq!(m.frame_rate, 100.0);
    }

    #[test]
    fn silence_gives_identical_constant_frames() {
        let cfg = MfccConfig {
            n_mels: 40,
            n_coeffs: 13,
            ..MfccConfig::default()
        };
        let m = compute_mfcc(&vec![0.0f64; 4000], 16_000, &cfg).unwrap();
        let first = m.data.row(0).to_vec();
        let c0 = (40f64).sqrt() * (1e-10f64).ln();
        assert!((first[0] - c0).abs() < 1e-9);
        assert!(first[1..].iter().all(|c| c.abs() < 1e-9));
        assert!(m.data.row_iter().all(|r| r == first.as_slice()));
    }

    #[test]
    fn filterbank_rows_are_triangles() {
        let fb = mel_filterbank::<f64>(16_000, 512, 40);
        for m in 0..40 {
            let row = fb.row(m);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(row.iter().any(|&v| v > 0.0), "filter {m} is empty");
        }
    }

    #[test]
    fn config_errors() {
        let wave = vec![0.0f64; 100];
        assert!(compute_mfcc(&wave, 16_000, &MfccConfig::default()).is_err());
        let long = vec![0.0f64; 1000];
        assert!(compute_mfcc(&long, 8_000, &MfccConfig::default()).is_err());
        let bad = MfccConfig {
            n_coeffs: 300,
            ..MfccConfig::default()
        };
        assert!(compute_mfcc(&long, 16_000, &bad).is_err());
        let mut nan = long.clone();
        nan[3] = f64::NAN;
        assert!(compute_mfcc(&nan, 16_000, &MfccConfig::default()).is_err());
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-3, 5), 3);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }
}
