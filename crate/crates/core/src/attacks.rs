//! Image perturbations applied before extraction to probe robustness.

use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::ImageFormat;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image_io::{
    load_image, resolve_entry_path, save_png, write_manifest, DatasetManifest, ManifestEntry,
    Plane, RgbImage,
};
use crate::synth::{reflect, rng};

/// Smallest side the 45° inscribed crop may produce.
const MIN_ROTATED_SIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    RandomSquare,
    GaussianBlur {
        ksize: u32,
    },
    Rotate {
        degrees: u32,
    },
    /// Percent change of each side, `+50` or `-50`.
    Scale {
        percent: i32,
    },
    Jpeg {
        quality: u8,
    },
}

impl AttackKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AttackKind::RandomSquare => true,
            AttackKind::GaussianBlur { ksize } => matches!(ksize, 3 | 9 | 15),
            AttackKind::Rotate { degrees } => matches!(degrees, 45 | 90 | 180),
            AttackKind::Scale { percent } => matches!(percent, 50 | -50),
            AttackKind::Jpeg { quality } => quality == 50,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "unsupported attack parameters {self}"
            )))
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackKind::RandomSquare => f.write_str("random-square"),
            AttackKind::GaussianBlur { ksize } => write!(f, "blur:{ksize}"),
            AttackKind::Rotate { degrees } => write!(f, "rotate:{degrees}"),
            AttackKind::Scale { percent } => write!(f, "scale:{percent:+}"),
            AttackKind::Jpeg { quality } => write!(f, "jpeg:{quality}"),
        }
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid attack {s:?}"));
        let kind = match s.split_once(':') {
            None if s == "random-square" => AttackKind::RandomSquare,
            Some(("blur", v)) => AttackKind::GaussianBlur {
                ksize: v.parse().map_err(|_| bad())?,
            },
            Some(("rotate", v)) => AttackKind::Rotate {
                degrees: v.parse().map_err(|_| bad())?,
            },
            Some(("scale", v)) => AttackKind::Scale {
                percent: v.parse().map_err(|_| bad())?,
            },
            Some(("jpeg", v)) => AttackKind::Jpeg {
                quality: v.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        kind.validate().map_err(|_| bad())?;
        Ok(kind)
    }
}

/// One perturbation; `seed` only matters for `RandomSquare`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, seed: u64) -> Self {
        AttackSpec { kind, seed }
    }
}

pub fn apply_attack(image: &RgbImage, spec: &AttackSpec) -> Result<RgbImage> {
    spec.kind.validate()?;
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Dimension("cannot attack an empty image".into()));
    }
    match spec.kind {
        AttackKind::RandomSquare => Ok(random_square(image, spec.seed)),
        AttackKind::GaussianBlur { ksize } => Ok(gaussian_blur(image, ksize as usize)),
        AttackKind::Rotate { degrees: 90 } => Ok(image.map_planes(rotate90)),
        AttackKind::Rotate { degrees: 180 } => Ok(image.map_planes(rotate180)),
        AttackKind::Rotate { .. } => rotate45(image),
        AttackKind::Scale { percent } => {
            let f = 1.0 + f64::from(percent) / 100.0;
            let w = (image.width() as f64 * f).round() as usize;
            let h = (image.height() as f64 * f).round() as usize;
            Ok(image.map_planes(|p| resize_bilinear(p, w.max(1), h.max(1))))
        }
        AttackKind::Jpeg { quality } => jpeg_round_trip(image, quality),
    }
}

/// Output name for the `index`-th attacked entry; the index keeps names
/// unique when inputs share a stem.
pub fn attacked_file_name(index: usize, entry_path: &str) -> String {
    let stem = Path::new(entry_path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    format!("{index:05}_{stem}.png")
}

/// Attacks the `index`-th manifest entry and writes it as PNG into
/// `out_dir`. The per-image seed is `seed ^ index`.
pub fn attack_entry(
    manifest_path: &Path,
    index: usize,
    entry: &ManifestEntry,
    kind: AttackKind,
    seed: u64,
    out_dir: &Path,
) -> Result<ManifestEntry> {
    if let Some(prev) = &entry.attack {
        return Err(Error::Validation(format!(
            "{} was already attacked ({prev}); attacks are not chained",
            entry.path
        )));
    }
    let img = load_image(resolve_entry_path(manifest_path, &entry.path))?;
    let out = apply_attack(&img, &AttackSpec::new(kind, seed ^ index as u64))?;
    let name = attacked_file_name(index, &entry.path);
    save_png(&out, out_dir.join(&name))?;
    Ok(ManifestEntry {
        path: name,
        label: entry.label,
        source: entry.source.clone(),
        attack: Some(kind.to_string()),
    })
}

/// Sequential corpus attack. Entries that fail are left out of the derived
/// manifest and reported with their cause.
pub fn attack_manifest(
    manifest_path: &Path,
    manifest: &DatasetManifest,
    kind: AttackKind,
    seed: u64,
    out_dir: &Path,
) -> Result<(DatasetManifest, Vec<(String, Error)>)> {
    kind.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut derived = DatasetManifest::default();
    let mut failures = Vec::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        match attack_entry(manifest_path, i, entry, kind, seed, out_dir) {
            Ok(e) => derived.push(e)?,
            Err(e) => failures.push((entry.path.clone(), e)),
        }
    }
    write_manifest(&derived, out_dir.join("manifest.csv"))?;
    Ok((derived, failures))
}

fn random_square(image: &RgbImage, seed: u64) -> RgbImage {
    let mut rng = rng(seed);
    let (w, h) = (image.width(), image.height());
    let short = w.min(h) as f64;
    let mut side = || ((short * rng.random_range(0.1..=0.5)).round() as usize).clamp(1, w.min(h));
    let (sw, sh) = (side(), side());
    let x0 = rng.random_range(0..=w - sw);
    let y0 = rng.random_range(0..=h - sh);
    let color: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let mut out = image.clone();
    for (plane, c) in [&mut out.r, &mut out.g, &mut out.b].into_iter().zip(color) {
        for y in y0..y0 + sh {
            for x in x0..x0 + sw {
                plane.set(x, y, c);
            }
        }
    }
    out
}

/// Conventional sigma for a given odd kernel size.
pub fn blur_sigma(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

pub fn gaussian_taps(ksize: usize) -> Vec<f64> {
    let sigma = blur_sigma(ksize);
    let half = (ksize / 2) as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn gaussian_blur(image: &RgbImage, ksize: usize) -> RgbImage {
    let taps = gaussian_taps(ksize);
    let half = (ksize / 2) as isize;
    image.map_planes(|p| {
        let (w, h) = (p.width(), p.height());
        let horiz: Vec<f64> = (0..h)
            .flat_map(|y| {
                let taps = &taps;
                (0..w).map(move |x| {
                    taps.iter()
                        .enumerate()
                        .map(|(i, t)| t * p.get(reflect(x as isize + i as isize - half, w), y))
                        .sum::<f64>()
                })
            })
            .collect();
        Plane::from_fn(w, h, |x, y| {
            taps.iter()
                .enumerate()
                .map(|(i, t)| t * horiz[reflect(y as isize + i as isize - half, h) * w + x])
                .sum()
        })
    })
}

/// Counter-clockwise quarter turn: `out(y, W-1-x) = in(x, y)`.
fn rotate90(p: &Plane) -> Plane {
    let w = p.width();
    Plane::from_fn(p.height(), w, |ox, oy| p.get(w - 1 - oy, ox))
}

fn rotate180(p: &Plane) -> Plane {
    let (w, h) = (p.width(), p.height());
    Plane::from_fn(w, h, |x, y| p.get(w - 1 - x, h - 1 - y))
}

fn bilinear(p: &Plane, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (p.width() - 1) as f64);
    let y = y.clamp(0.0, (p.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(p.width() - 1), (y0 + 1).min(p.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = p.get(x0, y0) * (1.0 - fx) + p.get(x1, y0) * fx;
    let bottom = p.get(x0, y1) * (1.0 - fx) + p.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Side of the largest axis-aligned square inside a `w×h` image turned by 45°,
/// measured so that every sample center maps inside the source.
pub fn rotate45_side(w: usize, h: usize) -> usize {
    let short = w.min(h);
    if short == 0 {
        return 0;
    }
    ((short - 1) as f64 / std::f64::consts::SQRT_2 + 1e-9).floor() as usize + 1
}

fn rotate45(image: &RgbImage) -> Result<RgbImage> {
    let (w, h) = (image.width(), image.height());
    let side = rotate45_side(w, h);
    if side < MIN_ROTATED_SIDE {
        return Err(Error::Dimension(format!(
            "{w}x{h} image too small for a 45 degree rotation crop"
        )));
    }
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let c = (side - 1) as f64 / 2.0;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // counter-clockwise on screen (y down): source = R(+45°) applied to output offset
    Ok(image.map_planes(|p| {
        Plane::from_fn(side, side, |ox, oy| {
            let (u, v) = (ox as f64 - c, oy as f64 - c);
            bilinear(p, cx + s * (u + v), cy + s * (v - u))
        })
    }))
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_bilinear(p: &Plane, new_w: usize, new_h: usize) -> Plane {
    let sx = p.width() as f64 / new_w as f64;
    let sy = p.height() as f64 / new_h as f64;
    Plane::from_fn(new_w, new_h, |x, y| {
        bilinear(p, (x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

/// Baseline JPEG encode at `quality`, then decode.
pub fn jpeg_round_trip(image: &RgbImage, quality: u8) -> Result<RgbImage> {
    let rgb = image.to_rgb8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&rgb)
        .map_err(|e| Error::Format(format!("jpeg encode: {e}")))?;
    let decoded = image::load(Cursor::new(buf), ImageFormat::Jpeg)
        .map_err(|e| Error::Format(format!("jpeg decode: {e}")))?;
    Ok(RgbImage::from_rgb8(&decoded.to_rgb8()))
}

/// Peak signal-to-noise ratio in dB over all three channels.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for (pa, pb) in a.planes().iter().zip(b.planes()) {
        for (x, y) in pa.data().iter().zip(pb.data()) {
            se += (x - y) * (x - y);
            n += 1;
        }
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}
