//! Canonical in-memory images and dataset manifests.
//!
//! Every 8-bit sample `c` is stored as `c / 255` in an `f64` plane, so all
//! downstream numerics run on the unit intensity scale.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageError, RgbImage as Rgb8Image};

use crate::error::{Error, Result};

/// A single channel of normalized intensities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane data has {} samples, expected {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds a plane from a generator; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Sample at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn is_constant(&self) -> bool {
        self.data.windows(2).all(|w| w[0] == w[1])
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// Three planes of equal geometry, R then G then B.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub r: Plane,
    pub g: Plane,
    pub b: Plane,
}

impl RgbImage {
    pub fn new(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        let dims = (r.width, r.height);
        if (g.width, g.height) != dims || (b.width, b.height) != dims {
            return Err(Error::Dimension(
                "RGB planes must share width and height".into(),
            ));
        }
        Ok(RgbImage { r, g, b })
    }

    /// Replicates a single plane into all three channels.
    pub fn from_gray(plane: Plane) -> Self {
        RgbImage {
            r: plane.clone(),
            g: plane.clone(),
            b: plane,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.r.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.r.height
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn map_planes(&self, mut f: impl FnMut(&Plane) -> Plane) -> RgbImage {
        RgbImage {
            r: f(&self.r),
            g: f(&self.g),
            b: f(&self.b),
        }
    }

    /// Converts to 8-bit RGB with round-half-up quantization.
    pub fn to_rgb8(&self) -> Rgb8Image {
        let (w, h) = (self.width(), self.height());
        let mut raw = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            for p in self.planes() {
                raw.push(to_u8(p.data[i]));
            }
        }
        Rgb8Image::from_raw(w as u32, h as u32, raw).expect("buffer sized from dims")
    }

    pub fn from_rgb8(img: &Rgb8Image) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut chans = [
            Vec::with_capacity(w * h),
            Vec::with_capacity(w * h),
            Vec::with_capacity(w * h),
        ];
        for px in img.pixels() {
            for (c, chan) in chans.iter_mut().enumerate() {
                chan.push(f64::from(px[c]) / 255.0);
            }
        }
        let [r, g, b] = chans;
        RgbImage {
            r: Plane {
                width: w,
                height: h,
                data: r,
            },
            g: Plane {
                width: w,
                height: h,
                data: g,
            },
            b: Plane {
                width: w,
                height: h,
                data: b,
            },
        }
    }

    /// The image as it would come back from an 8-bit lossless file.
    pub fn quantized(&self) -> RgbImage {
        self.map_planes(|p| Plane {
            width: p.width,
            height: p.height,
            data: p
                .data
                .iter()
                .map(|&v| f64::from(to_u8(v)) / 255.0)
                .collect(),
        })
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Non-fatal conditions noticed while decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadWarning {
    GrayscaleReplicated,
    AlphaDropped,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadWarning::GrayscaleReplicated => {
                f.write_str("grayscale input replicated into R, G, B")
            }
            LoadWarning::AlphaDropped => f.write_str("alpha channel discarded"),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let (img, warnings) = load_image_with_warnings(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(img)
}

/// Decodes an 8-bit PNG or JPEG. Grayscale is replicated; 16-bit and float
/// sample formats are rejected.
pub fn load_image_with_warnings(path: impl AsRef<Path>) -> Result<(RgbImage, Vec<LoadWarning>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(
            path,
            io::Error::new(io::ErrorKind::InvalidData, other.to_string()),
        ),
    })?;

    let mut warnings = Vec::new();
    let img = match decoded {
        DynamicImage::ImageRgb8(rgb) => RgbImage::from_rgb8(&rgb),
        DynamicImage::ImageRgba8(rgba) => {
            warnings.push(LoadWarning::AlphaDropped);
            RgbImage::from_rgb8(&DynamicImage::ImageRgba8(rgba).to_rgb8())
        }
        DynamicImage::ImageLuma8(l) => {
            warnings.push(LoadWarning::GrayscaleReplicated);
            let (w, h) = (l.width() as usize, l.height() as usize);
            let data = l
                .into_raw()
                .into_iter()
                .map(|v| f64::from(v) / 255.0)
                .collect();
            RgbImage::from_gray(Plane {
                width: w,
                height: h,
                data,
            })
        }
        DynamicImage::ImageLumaA8(la) => {
            warnings.push(LoadWarning::GrayscaleReplicated);
            warnings.push(LoadWarning::AlphaDropped);
            let (w, h) = (la.width() as usize, la.height() as usize);
            let data = la.pixels().map(|p| f64::from(p[0]) / 255.0).collect();
            RgbImage::from_gray(Plane {
                width: w,
                height: h,
                data,
            })
        }
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported sample format {:?}, expected 8-bit",
                path.display(),
                other.color()
            )))
        }
    };
    Ok((img, warnings))
}

/// Writes the image as an 8-bit RGB PNG.
pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.to_rgb8()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(other.to_string()),
        })
}

/// Class ids used across the pipeline.
pub const LABEL_REAL: u32 = 0;
pub const LABEL_FAKE: u32 = 1;
pub const LABELS: [u32; 2] = [LABEL_REAL, LABEL_FAKE];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u32,
    pub source: String,
    /// Present only on manifests derived by an attack run.
    pub attack: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: ManifestEntry) -> Result<()> {
        if self.entries.iter().any(|e| e.path == entry.path) {
            return Err(Error::Validation(format!("duplicate path {}", entry.path)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn has_attack_column(&self) -> bool {
        self.entries.iter().any(|e| e.attack.is_some())
    }

    /// Serializes with a header row; the `attack` column is emitted only when
    /// some entry carries one.
    pub fn to_csv(&self) -> String {
        let with_attack = self.has_attack_column();
        let mut out = String::from(if with_attack {
            "path,label,source,attack\n"
        } else {
            "path,label,source\n"
        });
        for e in &self.entries {
            out.push_str(&format!("{},{},{}", e.path, e.label, e.source));
            if with_attack {
                out.push(',');
                out.push_str(e.attack.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) => h.trim_start_matches('\u{feff}').trim(),
            None => return Ok(DatasetManifest::default()),
        };
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.len() < 3 || columns[..3] != ["path", "label", "source"] {
            return Err(Error::Parse(format!(
                "manifest header must start with path,label,source, got {header:?}"
            )));
        }
        let with_attack = columns.get(3) == Some(&"attack");

        let mut manifest = DatasetManifest::default();
        for (lineno, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(Error::Parse(format!(
                    "manifest line {}: expected path,label,source",
                    lineno + 1
                )));
            }
            let label = parse_label(fields[1]).ok_or_else(|| {
                Error::Parse(format!(
                    "manifest line {}: unknown label {:?}",
                    lineno + 1,
                    fields[1]
                ))
            })?;
            let attack = if with_attack {
                fields
                    .get(3)
                    .map(|s| s.to_string())
                    .filter(|s| !s.is_empty())
            } else {
                None
            };
            manifest.push(ManifestEntry {
                path: fields[0].to_string(),
                label,
                source: fields[2].to_string(),
                attack,
            })?;
        }
        Ok(manifest)
    }
}

fn parse_label(token: &str) -> Option<u32> {
    token
        .trim()
        .parse::<u32>()
        .ok()
        .filter(|l| LABELS.contains(l))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::parse(&text)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_csv()).map_err(|e| Error::io(path, e))
}

/// Resolves a manifest entry path against the directory holding the manifest.
pub fn resolve_entry_path(manifest_path: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, ImageBuffer, Luma, Rgb};

    #[test]
    fn rgb_pixel_scales_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("px.png");
        let img: Rgb8Image = ImageBuffer::from_pixel(1, 1, Rgb([255, 128, 0]));
        img.save(&path).unwrap();
        let loaded = load_image(&path).unwrap();
        assert_eq!(loaded.r.get(0, 0), 1.0);
        assert_eq!(loaded.g.get(0, 0), 128.0 / 255.0);
        assert_eq!(loaded.b.get(0, 0), 0.0);
    }

    #[test]
    fn grayscale_is_replicated_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img: GrayImage = ImageBuffer::from_pixel(1, 1, Luma([51]));
        img.save(&path).unwrap();
        let (loaded, warnings) = load_image_with_warnings(&path).unwrap();
        for p in loaded.planes() {
            assert_eq!(p.get(0, 0), 0.2);
        }
        assert_eq!(warnings, vec![LoadWarning::GrayscaleReplicated]);
    }

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img: Rgb8Image = ImageBuffer::from_fn(32, 32, |x, y| Rgb([x as u8, y as u8, 7]));
        img.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Io { .. })));
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn sixteen_bit_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_pixel(2, 2, Rgb([1000, 2, 3]));
        img.save(&path).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
    }

    #[test]
    fn png_round_trip_is_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.png");
        let img = RgbImage::new(
            Plane::from_fn(5, 3, |x, y| (x * 3 + y) as f64 / 17.0),
            Plane::from_fn(5, 3, |x, _| x as f64 / 4.0),
            Plane::filled(5, 3, 0.3),
        )
        .unwrap()
        .quantized();
        save_png(&img, &path).unwrap();
        let a = load_image(&path).unwrap();
        let b = load_image(&path).unwrap();
        assert_eq!(a, img);
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_parses_entries_in_order() {
        let m = DatasetManifest::parse("path,label,source\na.png,0,celeba\nb.png,1,stylegan\n")
            .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].label, 0);
        assert_eq!(m.entries[1].source, "stylegan");
        assert_eq!(DatasetManifest::parse(&m.to_csv()).unwrap(), m);
    }

    #[test]
    fn header_only_manifest_is_empty() {
        assert!(DatasetManifest::parse("path,label,source\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_labels() {
        let dup = DatasetManifest::parse("path,label,source\na.png,0,x\na.png,1,y\n");
        assert!(matches!(dup, Err(Error::Validation(_))));
        let bad = DatasetManifest::parse("path,label,source\na.png,fake,x\n");
        assert!(matches!(bad, Err(Error::Parse(_))));
        let out_of_set = DatasetManifest::parse("path,label,source\na.png,7,x\n");
        assert!(matches!(out_of_set, Err(Error::Parse(_))));
    }

    #[test]
    fn attack_column_round_trips() {
        let text = "path,label,source,attack\na.png,0,x,blur:3\n";
        let m = DatasetManifest::parse(text).unwrap();
        assert_eq!(m.entries[0].attack.as_deref(), Some("blur:3"));
        assert_eq!(m.to_csv(), text);
    }

    #[test]
    fn plane_rejects_bad_geometry() {
        assert!(Plane::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Plane::new(1, 1, vec![1.5]).is_err());
        assert!(RgbImage::new(
            Plane::filled(2, 2, 0.0),
            Plane::filled(2, 3, 0.0),
            Plane::filled(2, 2, 0.0)
        )
        .is_err());
    }
}
