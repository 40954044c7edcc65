//! Image ingestion and per-channel CDP recovery.

use std::path::Path;
use std::time::Instant;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageEncoder, ImageReader};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{build_masks, CdpOperator};
use crate::bench::format_float;
use crate::cdp::cdp_solve;
use crate::error::{Error, Result};
use crate::measure::{sample_corruption, CorruptionSpec, MagnitudeLaw};
use crate::primitives::{complex_norm2, optimal_rotation};
use crate::rng::{derive_seed, Purpose};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R,
    G,
    B,
    Gray,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
            Channel::Gray => "gray",
        }
    }
}

/// One channel of an image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    pub width: usize,
    pub height: usize,
    pub channel: Channel,
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pnm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageData {
    pub width: usize,
    pub height: usize,
    pub format: ImageFormat,
    /// Either a single gray plane or R, G, B planes.
    pub planes: Vec<ImagePlane>,
}

impl ImageData {
    pub fn gray(width: usize, height: usize, pixels: Vec<f64>, format: ImageFormat) -> Result<Self> {
        if pixels.len() != width * height || pixels.is_empty() {
            return Err(Error::InvalidDimension(format!(
                "{width}x{height} image cannot hold {} pixels",
                pixels.len()
            )));
        }
        Ok(ImageData {
            width,
            height,
            format,
            planes: vec![ImagePlane {
                width,
                height,
                channel: Channel::Gray,
                pixels,
            }],
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if n == 0 || self.planes.is_empty() {
            return Err(Error::InvalidDimension("image has no pixels".into()));
        }
        for plane in &self.planes {
            if plane.width != self.width || plane.height != self.height || plane.pixels.len() != n {
                return Err(Error::InvalidDimension(format!(
                    "channel {} is {}x{} with {} pixels, image is {}x{}",
                    plane.channel.name(),
                    plane.width,
                    plane.height,
                    plane.pixels.len(),
                    self.width,
                    self.height
                )));
            }
            if plane.pixels.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite("image intensities"));
            }
        }
        Ok(())
    }
}

/// Reads an 8-bit PNG or a PGM/PPM file.
pub fn load_image(path: &Path) -> Result<ImageData> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let format = match reader.format() {
        Some(image::ImageFormat::Png) => ImageFormat::Png,
        Some(image::ImageFormat::Pnm) => ImageFormat::Pnm,
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?} ({})", path.display()))),
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "unrecognized image {}",
                path.display()
            )))
        }
    };
    let decoded = reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let planes = if decoded.color().has_color() {
        let rgb = decoded.to_rgb8();
        [Channel::R, Channel::G, Channel::B]
            .into_iter()
            .enumerate()
            .map(|(c, channel)| ImagePlane {
                width,
                height,
                channel,
                pixels: rgb.pixels().map(|p| p.0[c] as f64 / 255.0).collect(),
            })
            .collect()
    } else {
        let gray = decoded.to_luma8();
        vec![ImagePlane {
            width,
            height,
            channel: Channel::Gray,
            pixels: gray.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        }]
    };
    let data = ImageData {
        width,
        height,
        format,
        planes,
    };
    data.validate()?;
    Ok(data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes the image in its own format; intensities are clamped to `[0, 1]`.
pub fn save_image(path: &Path, data: &ImageData) -> Result<()> {
    data.validate()?;
    let (w, h) = (data.width as u32, data.height as u32);
    let n = data.width * data.height;
    let (bytes, color) = if data.planes.len() == 1 {
        (
            data.planes[0].pixels.iter().map(|&p| quantize(p)).collect::<Vec<u8>>(),
            image::ExtendedColorType::L8,
        )
    } else if data.planes.len() == 3 {
        let mut bytes = Vec::with_capacity(3 * n);
        for i in 0..n {
            for plane in &data.planes {
                bytes.push(quantize(plane.pixels[i]));
            }
        }
        (bytes, image::ExtendedColorType::Rgb8)
    } else {
        return Err(Error::UnsupportedFormat(format!("{} channels", data.planes.len())));
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let writer = std::io::BufWriter::new(file);
    let image_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    match data.format {
        ImageFormat::Png => image::codecs::png::PngEncoder::new(writer)
            .write_image(&bytes, w, h, color)
            .map_err(image_err),
        ImageFormat::Pnm => {
            let subtype = if data.planes.len() == 1 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            PnmEncoder::new(writer)
                .with_subtype(subtype)
                .write_image(&bytes, w, h, color)
                .map_err(image_err)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageRecoveryConfig {
    /// Number of masks `K`.
    pub k: usize,
    pub solver: SolverConfig,
    /// Fraction of the `n K` measurements that are corrupted.
    pub corrupt_fraction: f64,
    /// Corruption magnitudes are uniform on `(0, corrupt_magnitude * ||x*||]`.
    pub corrupt_magnitude: f64,
    pub seed: u64,
}

impl Default for ImageRecoveryConfig {
    fn default() -> Self {
        ImageRecoveryConfig {
            k: 12,
            solver: SolverConfig {
                alpha_hat: 0.1,
                ..Default::default()
            },
            corrupt_fraction: 0.05,
            corrupt_magnitude: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecovery {
    pub channel: Channel,
    pub n: usize,
    pub rel_error: f64,
    pub dist: f64,
    pub signal_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The channel was identically zero; its relative error is 0 by
    /// convention.
    pub degenerate: bool,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecovery {
    pub channels: Vec<ChannelRecovery>,
    pub image: ImageData,
    /// `sqrt(sum dist^2) / sqrt(sum ||x*||^2)` over channels.
    pub rel_error: f64,
}

/// Simulates corrupted CDP measurements of every channel, recovers each
/// channel independently and reassembles the image.
pub fn image_recover(image: &ImageData, cfg: &ImageRecoveryConfig) -> Result<ImageRecovery> {
    image.validate()?;
    if cfg.k == 0 {
        return Err(Error::InvalidDimension("K must be at least 1".into()));
    }
    cfg.solver.validate()?;
    let results: Vec<(ChannelRecovery, ImagePlane)> = image
        .planes
        .par_iter()
        .enumerate()
        .map(|(idx, plane)| recover_plane(plane, idx as u64, cfg))
        .collect::<Result<_>>()?;
    let (channels, planes): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let dist_sq: f64 = channels.iter().map(|c| c.dist * c.dist).sum();
    let norm_sq: f64 = channels.iter().map(|c| c.signal_norm * c.signal_norm).sum();
    let rel_error = if norm_sq > 0.0 { (dist_sq / norm_sq).sqrt() } else { 0.0 };
    Ok(ImageRecovery {
        channels,
        image: ImageData {
            width: image.width,
            height: image.height,
            format: image.format,
            planes,
        },
        rel_error,
    })
}

fn recover_plane(plane: &ImagePlane, idx: u64, cfg: &ImageRecoveryConfig) -> Result<(ChannelRecovery, ImagePlane)> {
    let started = Instant::now();
    let n = plane.pixels.len();
    let x_star: Vec<Complex64> = plane.pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let signal_norm = complex_norm2(&x_star);
    let masks = build_masks(n, cfg.k, derive_seed(cfg.seed, idx, Purpose::Masks))?;
    let op = CdpOperator::new(masks.clone());
    let mut y = op.forward(&x_star)?;
    let corruption = CorruptionSpec {
        fraction: cfg.corrupt_fraction,
        magnitude_scale: cfg.corrupt_magnitude,
        law: MagnitudeLaw::UniformUpTo,
        seed: derive_seed(cfg.seed, idx, Purpose::Corruption),
    };
    let eta = sample_corruption(y.len(), &corruption, signal_norm)?;
    y.iter_mut().zip(&eta).for_each(|(a, b)| *a += b);

    let solver = SolverConfig {
        seed: derive_seed(cfg.seed, idx, Purpose::PowerStart),
        ..cfg.solver
    };
    let result = cdp_solve(&y, &masks, &solver, Some(&x_star))?;
    let dist = result.final_dist().unwrap_or(f64::NAN);
    let degenerate = signal_norm == 0.0;
    let rel_error = if degenerate { 0.0 } else { dist / signal_norm };
    let rot = optimal_rotation(&result.x_hat, &x_star);
    let pixels = result.x_hat.iter().map(|v| (v * rot).re.clamp(0.0, 1.0)).collect();
    Ok((
        ChannelRecovery {
            channel: plane.channel,
            n,
            rel_error,
            dist,
            signal_norm,
            iterations: result.iterations_run,
            converged: result.converged,
            degenerate,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        ImagePlane {
            width: plane.width,
            height: plane.height,
            channel: plane.channel,
            pixels,
        },
    ))
}

/// One line of the reconstruction metadata CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CdpCsvRow {
    pub image: String,
    pub channel: String,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub alpha_hat: f64,
    pub relative_error: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
}

pub const CDP_CSV_HEADER: [&str; 9] = [
    "image",
    "channel",
    "n",
    "K",
    "alpha",
    "alpha_hat",
    "relative_error",
    "iterations",
    "wall_time_ms",
];

pub fn write_cdp_csv(path: &Path, rows: &[CdpCsvRow]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CDP_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.channel.clone(),
            r.n.to_string(),
            r.k.to_string(),
            format_float(r.alpha),
            format_float(r.alpha_hat),
            format_float(r.relative_error),
            r.iterations.to_string(),
            format_float(r.wall_time_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cdp_csv(path: &Path) -> Result<Vec<CdpCsvRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CDP_CSV_HEADER) {
        return Err(Error::Malformed(format!(
            "unexpected CDP CSV header in {}",
            path.display()
        )));
    }
    let parse_err = |field: &str| Error::Malformed(format!("bad {field} in {}", path.display()));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(i).unwrap_or_default();
        rows.push(CdpCsvRow {
            image: f(0).to_string(),
            channel: f(1).to_string(),
            n: f(2).parse().map_err(|_| parse_err("n"))?,
            k: f(3).parse().map_err(|_| parse_err("K"))?,
            alpha: f(4).parse().map_err(|_| parse_err("alpha"))?,
            alpha_hat: f(5).parse().map_err(|_| parse_err("alpha_hat"))?,
            relative_error: f(6).parse().map_err(|_| parse_err("relative_error"))?,
            iterations: f(7).parse().map_err(|_| parse_err("iterations"))?,
            wall_time_ms: f(8).parse().map_err(|_| parse_err("wall_time_ms"))?,
        });
    }
    Ok(rows)
}
