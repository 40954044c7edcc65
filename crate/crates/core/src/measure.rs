//! Synthetic measurement model: Gaussian ensembles, Gaussian signals,
//! sparse corruption, uniform noise and their composition
//! `y = |A x*| + eta* + eps`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::operator::{DenseOperator, MeasurementOperator};
use crate::primitives::{ensure_finite, fraction_count};
use crate::rng::stream;

/// `m x n` matrix of i.i.d. standard normal entries, regenerated bit-for-bit
/// from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEnsemble {
    seed: u64,
    matrix: DenseOperator,
}

impl GaussianEnsemble {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn matrix(&self) -> &DenseOperator {
        &self.matrix
    }
}

impl MeasurementOperator for GaussianEnsemble {
    fn num_rows(&self) -> usize {
        self.matrix.num_rows()
    }

    fn num_cols(&self) -> usize {
        self.matrix.num_cols()
    }

    #[inline]
    fn row_inner(&self, i: usize, x: &[f64]) -> f64 {
        self.matrix.row_inner(i, x)
    }

    fn adjoint_weighted(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.matrix.adjoint_weighted(w)
    }
}

/// How the magnitude of each corrupted entry is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeLaw {
    /// Every corrupted entry has magnitude `magnitude_scale * ||x*||`.
    #[default]
    Fixed,
    /// Magnitudes are uniform on `(0, magnitude_scale * ||x*||]`.
    UniformUpTo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub fraction: f64,
    pub magnitude_scale: f64,
    pub law: MagnitudeLaw,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub eta_star: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub y: Vec<f64>,
    pub ground_truth: Option<GroundTruth>,
}

pub fn sample_signal(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("signal length must be at least 1".into()));
    }
    let mut rng = stream(seed);
    Ok((0..n).map(|_| rng.sample(StandardNormal)).collect())
}

pub fn sample_ensemble(n: usize, m: usize, seed: u64) -> Result<GaussianEnsemble> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidDimension(format!(
            "ensemble needs m >= 1 and n >= 1, got m={m}, n={n}"
        )));
    }
    let mut rng = stream(seed);
    let data: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(GaussianEnsemble {
        seed,
        matrix: DenseOperator::from_rows(m, n, data)?,
    })
}

/// Sparse corruption with exactly `floor(fraction * m)` nonzeros on a
/// uniformly random support, each with a uniformly random sign.
pub fn sample_corruption(m: usize, spec: &CorruptionSpec, x_norm: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidDimension("corruption length must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&spec.fraction) {
        return Err(Error::InvalidFraction(spec.fraction));
    }
    if !(spec.magnitude_scale >= 0.0 && spec.magnitude_scale.is_finite()) || !(x_norm >= 0.0 && x_norm.is_finite()) {
        return Err(Error::InvalidLevel(spec.magnitude_scale * x_norm));
    }
    let mut out = vec![0.0; m];
    let count = fraction_count(spec.fraction, m);
    if count == 0 {
        return Ok(out);
    }
    let mut rng = stream(spec.seed);
    let mut support = index::sample(&mut rng, m, count).into_vec();
    support.sort_unstable();
    let peak = spec.magnitude_scale * x_norm;
    for i in support {
        let magnitude = match spec.law {
            MagnitudeLaw::Fixed => peak,
            // 1 - U[0,1) lies in (0, 1]
            MagnitudeLaw::UniformUpTo => peak * (1.0 - rng.random::<f64>()),
        };
        out[i] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    Ok(out)
}

/// I.i.d. `U(0, p)` noise. Each entry is `p * u_i` with `u_i` from the
/// seeded stream, so two levels with the same seed are paired.
pub fn sample_noise(m: usize, spec: &NoiseSpec) -> Result<Vec<f64>> {
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return Err(Error::InvalidLevel(spec.level));
    }
    if spec.level == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let mut rng = stream(spec.seed);
    Ok((0..m).map(|_| spec.level * rng.random::<f64>()).collect())
}

/// `y_i = |a_i^T x*| + eta*_i + eps_i`, summed left to right.
pub fn compose_observations<A: MeasurementOperator + ?Sized>(
    a: &A,
    x_star: &[f64],
    eta_star: &[f64],
    eps: &[f64],
) -> Result<ObservationSet> {
    let m = a.num_rows();
    check_len("compose_observations: x*", a.num_cols(), x_star.len())?;
    check_len("compose_observations: eta*", m, eta_star.len())?;
    check_len("compose_observations: eps", m, eps.len())?;
    ensure_finite("x*", x_star)?;
    let y_star = a.apply(x_star)?;
    let y = y_star
        .iter()
        .zip(eta_star)
        .zip(eps)
        .map(|((ys, e), n)| ys + e + n)
        .collect();
    Ok(ObservationSet {
        y,
        ground_truth: Some(GroundTruth {
            x_star: x_star.to_vec(),
            y_star,
            eta_star: eta_star.to_vec(),
            eps: eps.to_vec(),
        }),
    })
}

const MAGIC: &[u8; 4] = b"RPOB";
const FORMAT_VERSION: u32 = 1;

/// Everything needed to replay a synthetic trial: generation parameters
/// and the observations themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub alpha: f64,
    pub magnitude_scale: f64,
    pub noise_p: f64,
    pub observations: ObservationSet,
}

impl ObservationRecord {
    /// Little-endian container:
    ///
    /// ```text
    /// magic "RPOB" | version u32 | n u64 | m u64 | seed u64
    /// | alpha f64 | magnitude_scale f64 | p f64 | has_truth u8
    /// | y[m] f64 | (x*[n] y*[m] eta*[m] eps[m] f64 if has_truth)
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in [self.alpha, self.magnitude_scale, self.noise_p] {
            w.write_all(&v.to_le_bytes())?;
        }
        let truth = self.observations.ground_truth.as_ref();
        w.write_all(&[truth.is_some() as u8])?;
        write_f64s(&mut w, &self.observations.y)?;
        if let Some(gt) = truth {
            write_f64s(&mut w, &gt.x_star)?;
            write_f64s(&mut w, &gt.y_star)?;
            write_f64s(&mut w, &gt.eta_star)?;
            write_f64s(&mut w, &gt.eps)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let malformed = |e: std::io::Error| Error::Malformed(format!("observation record: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(malformed)?;
        if &magic != MAGIC {
            return Err(Error::Malformed("observation record: bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r).map_err(malformed)?);
        if version != FORMAT_VERSION {
            return Err(Error::Malformed(format!(
                "observation record: unsupported version {version}"
            )));
        }
        let n = u64::from_le_bytes(read_array(&mut r).map_err(malformed)?) as usize;
        let m = u64::from_le_bytes(read_array(&mut r).map_err(malformed)?) as usize;
        let seed = u64::from_le_bytes(read_array(&mut r).map_err(malformed)?);
        let alpha = f64::from_le_bytes(read_array(&mut r).map_err(malformed)?);
        let magnitude_scale = f64::from_le_bytes(read_array(&mut r).map_err(malformed)?);
        let noise_p = f64::from_le_bytes(read_array(&mut r).map_err(malformed)?);
        let [flag] = read_array::<_, 1>(&mut r).map_err(malformed)?;
        let y = read_f64s(&mut r, m).map_err(malformed)?;
        let ground_truth = match flag {
            0 => None,
            1 => Some(GroundTruth {
                x_star: read_f64s(&mut r, n).map_err(malformed)?,
                y_star: read_f64s(&mut r, m).map_err(malformed)?,
                eta_star: read_f64s(&mut r, m).map_err(malformed)?,
                eps: read_f64s(&mut r, m).map_err(malformed)?,
            }),
            other => {
                return Err(Error::Malformed(format!(
                    "observation record: bad ground-truth flag {other}"
                )))
            }
        };
        Ok(ObservationRecord {
            n,
            m,
            seed,
            alpha,
            magnitude_scale,
            noise_p,
            observations: ObservationSet { y, ground_truth },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f64s<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<f64>> {
    (0..len).map(|_| read_array(r).map(f64::from_le_bytes)).collect()
}
