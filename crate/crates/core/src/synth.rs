//! Seeded image generators with known ground truth.
//!
//! All randomness comes from `Xoshiro256PlusPlus` seeded through
//! `seed_from_u64` (SplitMix64 state expansion). Image `i` of a dataset uses
//! the seed `spec.seed ^ i`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::image_io::{
    save_png, write_manifest, DatasetManifest, ManifestEntry, Plane, RgbImage, LABEL_FAKE,
    LABEL_REAL,
};

/// Separable weights of the default 4×4 transpose-convolution kernel.
pub const DEFAULT_TCONV_TAPS: [f64; 4] = [0.25, 0.75, 0.75, 0.25];

/// Amplitude of the fresh noise mixed into `smoothed_noise`.
const RENOISE: f64 = 0.05;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn noise_plane(rng: &mut Xoshiro256PlusPlus, w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |_, _| rng.random::<f64>())
}

/// I.i.d. uniform intensities; the R plane is drawn first, then G, then B.
pub fn gen_noise_image(seed: u64, w: usize, h: usize) -> RgbImage {
    let mut rng = rng(seed);
    let r = noise_plane(&mut rng, w, h);
    let g = noise_plane(&mut rng, w, h);
    let b = noise_plane(&mut rng, w, h);
    RgbImage { r, g, b }
}

/// Mirror index without repeating the edge sample (…2 1 | 0 1 2 …).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn box3(p: &Plane) -> Plane {
    let (w, h) = (p.width(), p.height());
    Plane::from_fn(w, h, |x, y| {
        let mut s = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                s += p.get(reflect(x as isize + dx, w), reflect(y as isize + dy, h));
            }
        }
        s / 9.0
    })
}

/// Noise smoothed by a 3×3 box, then blended with 5% fresh noise.
pub fn gen_smoothed_noise_image(seed: u64, w: usize, h: usize) -> RgbImage {
    let mut rng = rng(seed);
    let base = [
        noise_plane(&mut rng, w, h),
        noise_plane(&mut rng, w, h),
        noise_plane(&mut rng, w, h),
    ];
    let [r, g, b] = base.map(|p| {
        let smooth = box3(&p);
        let fresh = noise_plane(&mut rng, w, h);
        Plane::from_fn(w, h, |x, y| {
            (1.0 - RENOISE) * smooth.get(x, y) + RENOISE * fresh.get(x, y)
        })
    });
    RgbImage { r, g, b }
}

fn upsample_plane(p: &Plane) -> Plane {
    let (w, h) = (p.width(), p.height());
    // odd samples average their flanking even samples; the last one repeats the edge
    let horiz = Plane::from_fn(2 * w, h, |x, y| {
        let x0 = x / 2;
        if x % 2 == 0 {
            p.get(x0, y)
        } else {
            (p.get(x0, y) + p.get((x0 + 1).min(w - 1), y)) / 2.0
        }
    });
    Plane::from_fn(2 * w, 2 * h, |x, y| {
        let y0 = y / 2;
        if y % 2 == 0 {
            horiz.get(x, y0)
        } else {
            (horiz.get(x, y0) + horiz.get(x, (y0 + 1).min(h - 1))) / 2.0
        }
    })
}

/// Separable 2× linear interpolation. Even-even samples copy the source.
pub fn upsample_linear(image: &RgbImage) -> RgbImage {
    image.map_planes(upsample_plane)
}

/// Outer product of [`DEFAULT_TCONV_TAPS`].
pub fn default_tconv_kernel() -> [f64; 16] {
    let mut k = [0.0; 16];
    for (i, a) in DEFAULT_TCONV_TAPS.iter().enumerate() {
        for (j, b) in DEFAULT_TCONV_TAPS.iter().enumerate() {
            k[i * 4 + j] = a * b;
        }
    }
    k
}

/// Unclipped stride-2 transpose convolution with a 4×4 kernel and padding 1,
/// mapping `W×H` to `2W×2H`. Kernel is row-major (`ky * 4 + kx`).
pub fn transpose_conv_raw(p: &Plane, kernel: &[f64; 16]) -> Vec<f64> {
    let (w, h) = (p.width(), p.height());
    let (ow, oh) = (2 * w, 2 * h);
    let mut out = vec![0.0; ow * oh];
    for iy in 0..h {
        for ix in 0..w {
            let v = p.get(ix, iy);
            if v == 0.0 {
                continue;
            }
            for ky in 0..4 {
                let oy = (2 * iy + ky) as isize - 1;
                if oy < 0 || oy >= oh as isize {
                    continue;
                }
                for kx in 0..4 {
                    let ox = (2 * ix + kx) as isize - 1;
                    if ox < 0 || ox >= ow as isize {
                        continue;
                    }
                    out[oy as usize * ow + ox as usize] += v * kernel[ky * 4 + kx];
                }
            }
        }
    }
    out
}

/// Fractionally-strided upsampling, output clipped to `[0, 1]`.
pub fn transpose_conv_upsample(image: &RgbImage, kernel: &[f64; 16]) -> RgbImage {
    image.map_planes(|p| {
        let raw = transpose_conv_raw(p, kernel);
        let ow = 2 * p.width();
        Plane::from_fn(ow, 2 * p.height(), |x, y| raw[y * ow + x])
    })
}

/// A kernel whose bottom-right tap dominates, so that solving the linear
/// relation for that tap is a convex combination and stays in `[0, 1]`.
/// The other seven taps are drawn from `[-0.12, 0]`; all taps sum to one.
pub fn random_stable_kernel(seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut k: Vec<f64> = (0..7).map(|_| -0.12 * rng.random::<f64>()).collect();
    let rest: f64 = k.iter().sum();
    k.push(1.0 - rest);
    k
}

/// Plane whose every interior pixel satisfies `I = Σ k·I_neighbor` exactly
/// for the 3×3 kernel `k` (coefficient order as in [`crate::em`]).
///
/// Rows 0–1 and columns 0–1 are random; each remaining pixel is obtained by
/// solving the relation centered on its upper-left neighbor for the
/// bottom-right tap.
pub fn exact_relation_plane(seed: u64, w: usize, h: usize, kernel: &[f64]) -> Plane {
    assert_eq!(kernel.len(), 8, "3x3 kernel expected");
    assert!(kernel[7].abs() > 1e-6, "bottom-right tap must be nonzero");
    let mut rng = rng(seed);
    let mut d: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
    let offs = crate::em::neighbor_offsets(1);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = d[y * w + x];
            for (o, &(dx, dy)) in offs.iter().enumerate().take(7) {
                let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                acc -= kernel[o] * d[ny * w + nx];
            }
            d[(y + 1) * w + x + 1] = acc / kernel[7];
        }
    }
    Plane::from_fn(w, h, |x, y| d[y * w + x])
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthKind {
    Noise,
    SmoothedNoise,
    LinearUpsample,
    TransposeConv { kernel: [f64; 16] },
}

impl SynthKind {
    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::Noise => "noise",
            SynthKind::SmoothedNoise => "smoothed_noise",
            SynthKind::LinearUpsample => "linear_upsample",
            SynthKind::TransposeConv { .. } => "transpose_conv",
        }
    }

    /// Natural-like kinds are real (0); upsampled kinds are fake (1).
    pub fn label(&self) -> u32 {
        match self {
            SynthKind::Noise | SynthKind::SmoothedNoise => LABEL_REAL,
            SynthKind::LinearUpsample | SynthKind::TransposeConv { .. } => LABEL_FAKE,
        }
    }

    fn is_upsampled(&self) -> bool {
        self.label() == LABEL_FAKE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub kind: SynthKind,
    pub count: usize,
    /// Manifest `source` tag; defaults to the kind name.
    pub source: Option<String>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Validation(format!(
                "synthetic images must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if let Some(src) = &self.source {
            if src.is_empty()
                || !src
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Validation(format!(
                    "source tag {src:?} must be non-empty ASCII letters, digits, '_' or '-'"
                )));
            }
        }
        if self.count < 1 {
            return Err(Error::Validation("count must be at least 1".into()));
        }
        if self.kind.is_upsampled()
            && !(self.width.is_multiple_of(2) && self.height.is_multiple_of(2))
        {
            return Err(Error::Validation(format!(
                "{} needs even dimensions",
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Upsampled kinds enlarge white noise of half the target size.
    pub fn image(&self, index: usize) -> RgbImage {
        let seed = self.seed ^ index as u64;
        let (w, h) = (self.width, self.height);
        match &self.kind {
            SynthKind::Noise => gen_noise_image(seed, w, h),
            SynthKind::SmoothedNoise => gen_smoothed_noise_image(seed, w, h),
            SynthKind::LinearUpsample => upsample_linear(&gen_noise_image(seed, w / 2, h / 2)),
            SynthKind::TransposeConv { kernel } => {
                transpose_conv_upsample(&gen_noise_image(seed, w / 2, h / 2), kernel)
            }
        }
    }

    pub fn source_name(&self) -> &str {
        self.source.as_deref().unwrap_or(self.kind.name())
    }

    pub fn file_name(&self, index: usize) -> String {
        format!("{}_{}_{:05}.png", self.source_name(), self.seed, index)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    seed: u64,
    width: usize,
    height: usize,
    kind: String,
    count: usize,
    kernel: Option<Vec<f64>>,
    source: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecFile {
    dataset: Vec<RawSpec>,
}

impl TryFrom<RawSpec> for SynthSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let kind = match (raw.kind.as_str(), raw.kernel) {
            ("noise", None) => SynthKind::Noise,
            ("smoothed_noise", None) => SynthKind::SmoothedNoise,
            ("linear_upsample", None) => SynthKind::LinearUpsample,
            ("transpose_conv", None) => SynthKind::TransposeConv {
                kernel: default_tconv_kernel(),
            },
            ("transpose_conv", Some(k)) => SynthKind::TransposeConv {
                kernel: k.try_into().map_err(|k: Vec<f64>| {
                    Error::Parse(format!(
                        "transpose_conv kernel needs 16 weights, got {}",
                        k.len()
                    ))
                })?,
            },
            (other, Some(_)) if other != "transpose_conv" => {
                return Err(Error::Parse(format!("kind {other} takes no kernel")))
            }
            (other, _) => return Err(Error::Parse(format!("unknown synthetic kind {other:?}"))),
        };
        let spec = SynthSpec {
            seed: raw.seed,
            width: raw.width,
            height: raw.height,
            kind,
            count: raw.count,
            source: raw.source,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a TOML document holding one or more `[[dataset]]` tables with
/// `seed`, `width`, `height`, `kind`, `count`, an optional 16-element
/// `kernel` for `transpose_conv` and an optional `source` tag.
pub fn parse_spec_file(text: &str) -> Result<Vec<SynthSpec>> {
    let raw: RawSpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    raw.dataset.into_iter().map(SynthSpec::try_from).collect()
}

/// Writes every image of every spec as PNG under `out_dir` plus a combined
/// `manifest.csv`, and returns that manifest.
pub fn gen_datasets(specs: &[SynthSpec], out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    for s in specs {
        s.validate()?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = DatasetManifest::default();
    for spec in specs {
        for i in 0..spec.count {
            let name = spec.file_name(i);
            save_png(&spec.image(i), out_dir.join(&name))?;
            manifest.push(ManifestEntry {
                path: name,
                label: spec.kind.label(),
                source: spec.source_name().to_string(),
                attack: None,
            })?;
        }
    }
    write_manifest(&manifest, out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

pub fn gen_dataset(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    gen_datasets(std::slice::from_ref(spec), out_dir)
}
