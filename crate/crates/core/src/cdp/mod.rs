//! Coded diffraction patterns: `y^(k) = |F D^(k) x|` for `K` random
//! diagonal masks with entries in `{1, -1, j, -j}` and the unitary DFT `F`.
//!
//! Measurement `i = k * n + l` is row `l` of `F D^(k)`, so `m = n K`.
//! Transforms go through `rustfft`, which handles every length.

mod image;
mod solve;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::rng::stream;

pub use self::image::{
    image_recover, load_image, read_cdp_csv, save_image, write_cdp_csv, CdpCsvRow, Channel, ChannelRecovery, ImageData,
    ImageFormat, ImagePlane, ImageRecovery, ImageRecoveryConfig,
};
pub use self::solve::{cdp_solve, cdp_spectral_apply, power_iteration_complex};

const PHASES: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(0.0, -1.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CdpMaskSet {
    n: usize,
    seed: u64,
    masks: Vec<Vec<Complex64>>,
}

impl CdpMaskSet {
    /// Mask set from explicit diagonals. Every diagonal must have length `n`
    /// and unit-modulus entries.
    pub fn from_masks(n: usize, masks: Vec<Vec<Complex64>>) -> Result<Self> {
        if n == 0 || masks.is_empty() {
            return Err(Error::InvalidDimension(format!(
                "mask set needs n >= 1 and K >= 1, got n={n}, K={}",
                masks.len()
            )));
        }
        for mask in &masks {
            check_len("CdpMaskSet::from_masks", n, mask.len())?;
            if mask.iter().any(|d| (d.norm() - 1.0).abs() > 1e-12) {
                return Err(Error::Malformed("mask entries must have unit modulus".into()));
            }
        }
        Ok(CdpMaskSet { n, seed: 0, masks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.masks.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.n * self.masks.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn masks(&self) -> &[Vec<Complex64>] {
        &self.masks
    }
}

/// `K` masks of length `n`, entries i.i.d. uniform over `{1, -1, j, -j}`.
pub fn build_masks(n: usize, k: usize, seed: u64) -> Result<CdpMaskSet> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidDimension(format!(
            "mask set needs n >= 1 and K >= 1, got n={n}, K={k}"
        )));
    }
    let mut rng = stream(seed);
    let masks = (0..k)
        .map(|_| (0..n).map(|_| PHASES[rng.random_range(0..4)]).collect())
        .collect();
    Ok(CdpMaskSet { n, seed, masks })
}

/// The linear map `x -> (F D^(k) x)_k` with cached FFT plans.
#[derive(Clone)]
pub struct CdpOperator {
    masks: CdpMaskSet,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for CdpOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CdpOperator")
            .field("n", &self.masks.n)
            .field("k", &self.masks.k())
            .finish()
    }
}

impl CdpOperator {
    pub fn new(masks: CdpMaskSet) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(masks.n);
        let inverse = planner.plan_fft_inverse(masks.n);
        let scale = 1.0 / (masks.n as f64).sqrt();
        CdpOperator {
            masks,
            forward,
            inverse,
            scale,
        }
    }

    pub fn masks(&self) -> &CdpMaskSet {
        &self.masks
    }

    pub fn n(&self) -> usize {
        self.masks.n
    }

    pub fn num_measurements(&self) -> usize {
        self.masks.num_measurements()
    }

    /// Unitary DFT of a length-`n` buffer, in place.
    pub fn dft_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// Unitary inverse DFT of a length-`n` buffer, in place.
    pub fn idft_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// Stacked complex measurements `F D^(k) x`, length `n K`.
    pub fn linear(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n();
        check_len("cdp linear map", n, x.len())?;
        let mut out = Vec::with_capacity(self.num_measurements());
        for mask in &self.masks.masks {
            let start = out.len();
            out.extend(mask.iter().zip(x).map(|(d, v)| d * v));
            self.dft_in_place(&mut out[start..]);
        }
        Ok(out)
    }

    /// Amplitudes `|F D^(k) x|`.
    pub fn forward(&self, x: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.linear(x)?.into_iter().map(|z| z.norm()).collect())
    }

    /// `(1/m) sum_k conj(D^(k)) . F^H w^(k)`.
    pub fn adjoint_weighted(&self, w: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n();
        check_len("cdp adjoint", self.num_measurements(), w.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (mask, block) in self.masks.masks.iter().zip(w.chunks_exact(n)) {
            buf.copy_from_slice(block);
            self.idft_in_place(&mut buf);
            for ((o, d), b) in out.iter_mut().zip(mask).zip(&buf) {
                *o += d.conj() * b;
            }
        }
        let inv_m = 1.0 / self.num_measurements() as f64;
        out.iter_mut().for_each(|o| *o *= inv_m);
        Ok(out)
    }
}

/// Transformed signal, indexable by measurement without rebuilding rows.
#[derive(Debug, Clone)]
pub struct CdpTransform {
    values: Vec<Complex64>,
}

impl CdpTransform {
    pub fn new(op: &CdpOperator, x: &[Complex64]) -> Result<Self> {
        Ok(CdpTransform { values: op.linear(x)? })
    }

    pub fn row_inner(&self, i: usize) -> Result<Complex64> {
        self.values.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.values.len(),
        })
    }
}

pub fn cdp_forward(x: &[Complex64], masks: &CdpMaskSet) -> Result<Vec<f64>> {
    CdpOperator::new(masks.clone()).forward(x)
}

/// Measurement `i` of `F D^(k) x` (complex, before taking the modulus).
pub fn cdp_row_inner(i: usize, x: &[Complex64], masks: &CdpMaskSet) -> Result<Complex64> {
    let m = masks.num_measurements();
    if i >= m {
        return Err(Error::IndexOutOfRange { index: i, len: m });
    }
    let op = CdpOperator::new(masks.clone());
    check_len("cdp_row_inner", op.n(), x.len())?;
    let (k, l) = (i / op.n(), i % op.n());
    let mut buf: Vec<Complex64> = masks.masks[k].iter().zip(x).map(|(d, v)| d * v).collect();
    op.dft_in_place(&mut buf);
    Ok(buf[l])
}

pub fn cdp_adjoint_weighted(w: &[Complex64], masks: &CdpMaskSet) -> Result<Vec<Complex64>> {
    CdpOperator::new(masks.clone()).adjoint_weighted(w)
}

/// Dense `m x n` realization of the stacked `F D^(k)` rows. Only for small
/// `n`; used to cross-check the FFT path.
pub fn dense_rows(masks: &CdpMaskSet) -> Vec<Vec<Complex64>> {
    let n = masks.n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut rows = Vec::with_capacity(masks.num_measurements());
    for mask in &masks.masks {
        for l in 0..n {
            rows.push(
                (0..n)
                    .map(|p| {
                        let angle = -std::f64::consts::TAU * ((l * p) % n) as f64 / n as f64;
                        Complex64::from_polar(scale, angle) * mask[p]
                    })
                    .collect(),
            );
        }
    }
    rows
}
