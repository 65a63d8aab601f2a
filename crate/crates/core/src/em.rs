//! Expectation-maximization estimate of the linear neighbor kernel that best
//! predicts each pixel from its surroundings, and the per-pixel posterior of
//! belonging to that linear model.
//!
//! Each pixel is modeled as either following
//! `I[x,y] = Σ k[s,t]·I[x+s,y+t]` up to Gaussian noise (model M1), or as an
//! outlier with a uniform residual density (model M2). The E-step computes
//! the Bayes posterior of M1 per pixel; the M-step re-fits the kernel by
//! weighted least squares through its normal equations. The center tap is
//! structurally absent.
//!
//! Coefficients are ordered row-major over the window: the row offset `dy`
//! is the outer loop, the column offset `dx` the inner one, both running
//! from `-alpha` to `alpha` with `(0, 0)` skipped.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image_io::{Plane, RgbImage};
use crate::linalg::{self, DenseMatrix, SolveRoute};

/// Weight sums under this value fall back to the sigma floor.
const WEIGHT_SUM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    /// Neighborhood half-width; the window is `(2·alpha+1)²`.
    pub alpha: usize,
    pub max_iters: usize,
    /// Convergence threshold on the largest kernel coefficient change.
    pub tol: f64,
    pub sigma_init: f64,
    pub sigma_floor: f64,
    pub prior_m1: f64,
    pub uniform_density: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            alpha: 1,
            max_iters: 100,
            tol: 1e-4,
            sigma_init: 0.1,
            sigma_floor: 1e-4,
            prior_m1: 0.5,
            uniform_density: 1.0,
        }
    }
}

impl EmConfig {
    pub fn with_alpha(alpha: usize) -> Self {
        EmConfig {
            alpha,
            ..EmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.alpha) {
            return Err(Error::Validation(format!(
                "alpha must be 1, 2 or 3, got {}",
                self.alpha
            )));
        }
        if self.max_iters < 1 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !positive(self.tol) {
            return Err(Error::Validation("tol must be positive".into()));
        }
        if !positive(self.sigma_floor) || !positive(self.sigma_init) {
            return Err(Error::Validation(
                "sigma_init and sigma_floor must be positive".into(),
            ));
        }
        if !(self.prior_m1 > 0.0 && self.prior_m1 < 1.0) {
            return Err(Error::Validation("prior_m1 must lie in (0, 1)".into()));
        }
        if !positive(self.uniform_density) {
            return Err(Error::Validation("uniform_density must be positive".into()));
        }
        Ok(())
    }
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

/// Number of kernel coefficients for a half-width (center excluded).
#[inline]
pub const fn kernel_len(alpha: usize) -> usize {
    (2 * alpha + 1) * (2 * alpha + 1) - 1
}

/// Length of the three-channel trace for a half-width.
#[inline]
pub const fn trace_len(alpha: usize) -> usize {
    3 * kernel_len(alpha)
}

/// Inverse of [`kernel_len`].
pub fn alpha_for_len(len: usize) -> Option<usize> {
    (1..=16).find(|&a| kernel_len(a) == len)
}

/// `(dx, dy)` offsets in coefficient order.
pub fn neighbor_offsets(alpha: usize) -> Vec<(isize, isize)> {
    let a = alpha as isize;
    let mut out = Vec::with_capacity(kernel_len(alpha));
    for dy in -a..=a {
        for dx in -a..=a {
            if (dx, dy) != (0, 0) {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Flat-index displacements of the neighbors inside a plane of `width`.
fn flat_offsets(alpha: usize, width: usize) -> Vec<isize> {
    neighbor_offsets(alpha)
        .into_iter()
        .map(|(dx, dy)| dy * width as isize + dx)
        .collect()
}

fn check_dims(plane: &Plane, alpha: usize) -> Result<()> {
    let side = 2 * alpha + 1;
    if plane.width() < side || plane.height() < side {
        return Err(Error::Dimension(format!(
            "plane {}x{} smaller than the {side}x{side} window",
            plane.width(),
            plane.height()
        )));
    }
    Ok(())
}

fn alpha_of(coeffs: &[f64]) -> Result<usize> {
    alpha_for_len(coeffs.len())
        .ok_or_else(|| Error::Dimension(format!("{} is not a valid kernel length", coeffs.len())))
}

/// Iterates `(flat index of pixel, interior index)` over the interior region.
fn interior(plane: &Plane, alpha: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let w = plane.width();
    let (iw, ih) = (w - 2 * alpha, plane.height() - 2 * alpha);
    (0..ih).flat_map(move |iy| (0..iw).map(move |ix| ((iy + alpha) * w + ix + alpha, iy * iw + ix)))
}

/// A matrix over the interior region `[alpha, W-alpha) × [alpha, H-alpha)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl InteriorMap {
    /// Value at interior coordinates (image coordinates minus `alpha`).
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Posterior probability that each interior pixel follows the linear model.
/// Every value lies strictly inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMap(InteriorMap);

impl PosteriorMap {
    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn mean(&self) -> f64 {
        self.0.data.iter().sum::<f64>() / self.0.data.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelEstimate {
    pub alpha: usize,
    pub coeffs: Vec<f64>,
    pub sigma_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl KernelEstimate {
    /// Coefficient at `(dx, dy)`; the center reads as zero.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        neighbor_offsets(self.alpha)
            .iter()
            .position(|&o| o == (dx, dy))
            .map_or(0.0, |i| self.coeffs[i])
    }
}

/// `|I − Σ k·I_neighbor|` on the interior.
pub fn residual_map(plane: &Plane, coeffs: &[f64]) -> Result<InteriorMap> {
    let alpha = alpha_of(coeffs)?;
    check_dims(plane, alpha)?;
    let offs = flat_offsets(alpha, plane.width());
    let px = plane.data();
    let (iw, ih) = (plane.width() - 2 * alpha, plane.height() - 2 * alpha);
    let mut data = vec![0.0; iw * ih];
    for (p, i) in interior(plane, alpha) {
        let pred: f64 = offs
            .iter()
            .zip(coeffs)
            .map(|(&o, &k)| k * px[(p as isize + o) as usize])
            .sum();
        data[i] = (px[p] - pred).abs();
    }
    Ok(InteriorMap {
        width: iw,
        height: ih,
        data,
    })
}

/// Zero-mean Gaussian density.
#[inline]
pub fn gaussian_density(r: f64, sigma_sq: f64) -> f64 {
    (-r * r / (2.0 * sigma_sq)).exp() / (2.0 * PI * sigma_sq).sqrt()
}

/// Bayes posterior of the linear model for each residual.
///
/// The result is clamped away from zero: far-tail residuals would otherwise
/// underflow the Gaussian to exactly 0.
pub fn e_step(
    residuals: &InteriorMap,
    sigma_sq: f64,
    prior_m1: f64,
    uniform_density: f64,
) -> PosteriorMap {
    let outlier = (1.0 - prior_m1) * uniform_density;
    let data = residuals
        .data
        .iter()
        .map(|&r| {
            let inlier = prior_m1 * gaussian_density(r, sigma_sq);
            (inlier / (inlier + outlier)).max(f64::MIN_POSITIVE)
        })
        .collect();
    PosteriorMap(InteriorMap {
        width: residuals.width,
        height: residuals.height,
        data,
    })
}

/// Weighted residual variance, floored at `sigma_floor²`.
pub fn estimate_sigma(residuals: &[f64], weights: &[f64], sigma_floor: f64) -> f64 {
    debug_assert_eq!(residuals.len(), weights.len());
    let floor = sigma_floor * sigma_floor;
    let (num, den) = residuals
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(n, d), (&r, &w)| (n + w * r * r, d + w));
    if den < WEIGHT_SUM_EPS {
        return floor;
    }
    (num / den).max(floor)
}

/// The weighted normal equations `A·k = b` of the least-squares kernel fit.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl NormalEquations {
    pub fn build(plane: &Plane, alpha: usize, weights: &[f64]) -> Result<Self> {
        check_dims(plane, alpha)?;
        let n = kernel_len(alpha);
        let interior_len = (plane.width() - 2 * alpha) * (plane.height() - 2 * alpha);
        if weights.len() != interior_len {
            return Err(Error::Dimension(format!(
                "{} weights for an interior of {interior_len} pixels",
                weights.len()
            )));
        }
        let offs = flat_offsets(alpha, plane.width());
        let px = plane.data();
        let mut a = DenseMatrix::zeros(n);
        let mut b = vec![0.0; n];
        let mut v = vec![0.0; n];
        {
            let acc = a.data_mut();
            for (p, i) in interior(plane, alpha) {
                let w = weights[i];
                if w == 0.0 {
                    continue;
                }
                for (slot, &o) in v.iter_mut().zip(&offs) {
                    *slot = px[(p as isize + o) as usize];
                }
                let center = px[p];
                for r in 0..n {
                    let wr = w * v[r];
                    b[r] += wr * center;
                    let row = &mut acc[r * n..r * n + n];
                    for c in r..n {
                        row[c] += wr * v[c];
                    }
                }
            }
            for r in 0..n {
                for c in 0..r {
                    acc[r * n + c] = acc[c * n + r];
                }
            }
        }
        Ok(NormalEquations { a, b })
    }
}

/// Weighted prediction energy `Σ w·(I − Σ k·I_neighbor)²`.
pub fn weighted_energy(plane: &Plane, weights: &[f64], coeffs: &[f64]) -> Result<f64> {
    let r = residual_map(plane, coeffs)?;
    if r.data.len() != weights.len() {
        return Err(Error::Dimension("weights do not cover the interior".into()));
    }
    Ok(r.data.iter().zip(weights).map(|(r, w)| w * r * r).sum())
}

/// Solves the weighted least-squares kernel fit.
pub fn m_step(plane: &Plane, alpha: usize, weights: &[f64]) -> Result<Vec<f64>> {
    m_step_with_route(plane, alpha, weights).map(|(k, _)| k)
}

pub fn m_step_with_route(
    plane: &Plane,
    alpha: usize,
    weights: &[f64],
) -> Result<(Vec<f64>, SolveRoute)> {
    check_dims(plane, alpha)?;
    // every row of A is proportional on a flat plane, whatever the weights
    if plane.is_constant() {
        return Err(Error::Degenerate("constant plane".into()));
    }
    let eq = NormalEquations::build(plane, alpha, weights)?;
    debug_assert!(eq.a.asymmetry() < 1e-10);
    linalg::solve_symmetric(&eq.a, &eq.b).ok_or_else(|| {
        Error::Degenerate("normal equations singular even with ridge regularization".into())
    })
}

/// Runs EM on one plane, starting from a uniform kernel.
pub fn run_em(plane: &Plane, config: &EmConfig) -> Result<(KernelEstimate, PosteriorMap)> {
    config.validate()?;
    let alpha = config.alpha;
    check_dims(plane, alpha)?;

    let n = kernel_len(alpha);
    let mut coeffs = vec![1.0 / n as f64; n];
    let mut sigma_sq = config.sigma_init * config.sigma_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut posterior;

    loop {
        let residuals = residual_map(plane, &coeffs)?;
        posterior = e_step(
            &residuals,
            sigma_sq,
            config.prior_m1,
            config.uniform_density,
        );
        sigma_sq = estimate_sigma(&residuals.data, posterior.data(), config.sigma_floor);
        let (next, route) = m_step_with_route(plane, alpha, posterior.data())?;

        #[cfg(debug_assertions)]
        if route == SolveRoute::Cholesky {
            let before = weighted_energy(plane, posterior.data(), &coeffs)?;
            let after = weighted_energy(plane, posterior.data(), &next)?;
            debug_assert!(
                after <= before + 1e-10 + 1e-12 * before,
                "M-step raised the weighted energy: {before} -> {after}"
            );
        }
        let _ = route;

        let delta = next
            .iter()
            .zip(&coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        coeffs = next;
        iterations += 1;
        if delta < config.tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iters {
            break;
        }
    }

    // Refresh variance and posterior against the final kernel.
    let residuals = residual_map(plane, &coeffs)?;
    sigma_sq = estimate_sigma(&residuals.data, posterior.data(), config.sigma_floor);
    let posterior = e_step(
        &residuals,
        sigma_sq,
        config.prior_m1,
        config.uniform_density,
    );

    Ok((
        KernelEstimate {
            alpha,
            coeffs,
            sigma_sq,
            iterations,
            converged,
        },
        posterior,
    ))
}

/// The channel order of a trace.
pub const CHANNELS: [char; 3] = ['R', 'G', 'B'];

/// Concatenated R, G, B kernels of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionalTrace {
    pub alpha: usize,
    pub features: Vec<f64>,
    /// Channels whose EM fit was degenerate and were zero-filled.
    pub degenerate: [bool; 3],
}

impl ConvolutionalTrace {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = kernel_len(self.alpha);
        &self.features[c * n..(c + 1) * n]
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    /// Degenerate channels as letters, e.g. `"RB"`; empty when none.
    pub fn degenerate_tag(&self) -> String {
        CHANNELS
            .iter()
            .zip(self.degenerate)
            .filter(|(_, d)| *d)
            .map(|(c, _)| *c)
            .collect()
    }
}

/// Runs EM per channel and concatenates the kernels.
pub fn extract_ct(image: &RgbImage, config: &EmConfig) -> Result<ConvolutionalTrace> {
    config.validate()?;
    let n = kernel_len(config.alpha);
    let mut features = Vec::with_capacity(3 * n);
    let mut degenerate = [false; 3];
    for (c, plane) in image.planes().into_iter().enumerate() {
        match run_em(plane, config) {
            Ok((k, _)) => features.extend_from_slice(&k.coeffs),
            Err(Error::Degenerate(_)) => {
                degenerate[c] = true;
                features.extend(std::iter::repeat_n(0.0, n));
            }
            Err(e) => return Err(e),
        }
    }
    if degenerate.iter().all(|&d| d) {
        return Err(Error::Extraction(
            "all three channels are degenerate".into(),
        ));
    }
    Ok(ConvolutionalTrace {
        alpha: config.alpha,
        features,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn noise_plane(seed: u64, w: usize, h: usize) -> Plane {
        synth::gen_noise_image(seed, w, h).r
    }

    #[test]
    fn zero_kernel_residual_is_the_plane() {
        let p = noise_plane(1, 9, 7);
        let r = residual_map(&p, &[0.0; 8]).unwrap();
        assert_eq!((r.width, r.height), (7, 5));
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(r.get(x, y), p.get(x + 1, y + 1));
            }
        }
    }

    #[test]
    fn affine_kernel_on_constant_plane_has_no_residual() {
        let p = Plane::filled(10, 10, 0.5);
        let k: Vec<f64> = (0..24)
            .map(|i| if i % 2 == 0 { 0.1 } else { -0.1 / 3.0 })
            .collect();
        let total: f64 = k.iter().sum();
        let k: Vec<f64> = k.iter().map(|v| v / total).collect();
        let r = residual_map(&p, &k).unwrap();
        assert!(r.data.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exact_relation_plane_has_no_residual() {
        let k = synth::random_stable_kernel(3);
        let p = synth::exact_relation_plane(4, 40, 30, &k);
        let r = residual_map(&p, &k).unwrap();
        assert!(
            r.data.iter().all(|v| *v < 1e-12),
            "max {}",
            r.data.iter().cloned().fold(0.0, f64::max)
        );
    }

    #[test]
    fn small_plane_is_dimension_error() {
        let p = Plane::filled(2, 5, 0.1);
        assert!(matches!(
            residual_map(&p, &[0.0; 8]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            run_em(&p, &EmConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn e_step_closed_forms() {
        let r = InteriorMap {
            width: 1,
            height: 1,
            data: vec![0.0],
        };
        // 1/(0.1·√(2π)) = 3.989422804; w = 3.989422804 / 4.989422804
        let w = e_step(&r, 0.01, 0.5, 1.0).get(0, 0);
        assert!((w - 0.799576).abs() < 1e-6, "{w}");

        let peak = 1.0 / (0.01f64 * 2.0 * PI).sqrt();
        assert_eq!(e_step(&r, 0.01, 0.5, peak).get(0, 0), 0.5);

        let far = InteriorMap {
            width: 1,
            height: 1,
            data: vec![10.0 * 0.1],
        };
        let w = e_step(&far, 0.01, 0.5, 1.0).get(0, 0);
        assert!(w > 0.0 && w < 1e-20);
        let very_far = InteriorMap {
            width: 1,
            height: 1,
            data: vec![1.0],
        };
        let w = e_step(&very_far, 1e-8, 0.5, 1.0).get(0, 0);
        assert!(w > 0.0 && w < 1e-300);
    }

    #[test]
    fn sigma_estimates() {
        assert!((estimate_sigma(&[0.1; 5], &[1.0; 5], 1e-4) - 0.01).abs() < 1e-15);
        assert_eq!(estimate_sigma(&[0.0; 5], &[1.0; 5], 1e-4), 1e-8);
        assert!((estimate_sigma(&[0.2, 5.0], &[1.0, 0.0], 1e-4) - 0.04).abs() < 1e-15);
        assert_eq!(estimate_sigma(&[0.3, 0.4], &[0.0, 0.0], 1e-3), 1e-6);
    }

    #[test]
    fn m_step_recovers_known_kernel() {
        for seed in 0..4 {
            let k = synth::random_stable_kernel(seed);
            let p = synth::exact_relation_plane(seed + 100, 48, 48, &k);
            let w = vec![1.0; 46 * 46];
            let got = m_step(&p, 1, &w).unwrap();
            let err = got
                .iter()
                .zip(&k)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "seed {seed}: {err}");
        }
    }

    #[test]
    fn constant_plane_is_degenerate() {
        let p = Plane::filled(20, 20, 0.5);
        assert!(matches!(
            m_step(&p, 1, &vec![1.0; 324]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            run_em(&p, &EmConfig::default()),
            Err(Error::Degenerate(_))
        ));
        let black = Plane::filled(20, 20, 0.0);
        assert!(matches!(
            run_em(&black, &EmConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn single_weighted_pixel_falls_back_to_ridge() {
        let p = noise_plane(9, 12, 12);
        let mut w = vec![0.0; 100];
        w[37] = 1.0;
        let (k, route) = m_step_with_route(&p, 1, &w).unwrap();
        assert_eq!(route, SolveRoute::Ridge);
        assert!(k.iter().all(|v| v.is_finite()));
        // the single equation is satisfied
        let r = residual_map(&p, &k).unwrap();
        assert!(r.data[37] < 1e-6);
    }

    #[test]
    fn normal_matrix_is_symmetric_and_matches_direct_sums() {
        let p = noise_plane(5, 11, 9);
        let w: Vec<f64> = (0..35).map(|i| 0.1 + (i % 6) as f64 / 10.0).collect();
        let eq = NormalEquations::build(&p, 2, &w).unwrap();
        assert!(eq.a.asymmetry() < 1e-10);
        // spot-check one entry against a direct double sum
        let offs = neighbor_offsets(2);
        let (i, j) = (3, 17);
        let mut direct = 0.0;
        let mut direct_b = 0.0;
        for y in 2..7 {
            for x in 2..9 {
                let wi = w[(y - 2) * 7 + (x - 2)];
                let at = |(dx, dy): (isize, isize)| {
                    p.get((x as isize + dx) as usize, (y as isize + dy) as usize)
                };
                direct += wi * at(offs[i]) * at(offs[j]);
                if j == 17 {
                    direct_b += wi * at(offs[i]) * p.get(x, y);
                }
            }
        }
        assert!((eq.a.get(i, j) - direct).abs() < 1e-12);
        assert!((eq.b[i] - direct_b).abs() < 1e-12);
    }

    #[test]
    fn m_step_never_raises_energy_for_fixed_weights() {
        let p = noise_plane(21, 30, 30);
        let cfg = EmConfig::default();
        let mut k = vec![1.0 / 8.0; 8];
        let mut sigma_sq = cfg.sigma_init * cfg.sigma_init;
        for _ in 0..10 {
            let r = residual_map(&p, &k).unwrap();
            let w = e_step(&r, sigma_sq, cfg.prior_m1, cfg.uniform_density);
            sigma_sq = estimate_sigma(&r.data, w.data(), cfg.sigma_floor);
            let next = m_step(&p, 1, w.data()).unwrap();
            let before = weighted_energy(&p, w.data(), &k).unwrap();
            let after = weighted_energy(&p, w.data(), &next).unwrap();
            assert!(after <= before + 1e-10, "{before} -> {after}");
            k = next;
        }
    }

    #[test]
    fn upsampled_noise_posterior_separates_lattices() {
        let img = synth::upsample_linear(&synth::gen_noise_image(77, 32, 32));
        let (k, post) = run_em(&img.g, &EmConfig::default()).unwrap();
        assert!(k.converged);
        let (mut interp, mut ni, mut copied, mut nc) = (0.0, 0, 0.0, 0);
        for y in 0..post.height() {
            for x in 0..post.width() {
                // image coordinates are interior + 1
                if (x + 1) % 2 == 0 && (y + 1) % 2 == 0 {
                    copied += post.get(x, y);
                    nc += 1;
                } else {
                    interp += post.get(x, y);
                    ni += 1;
                }
            }
        }
        assert!(interp / ni as f64 > 0.9);
        assert!(copied / (nc as f64) < 0.5);
        assert!((k.at(1, 0) - 0.5).abs() < 1e-3 && (k.at(1, 1) + 0.25).abs() < 1e-3);
    }

    #[test]
    fn noise_does_not_fit_perfectly() {
        let p = noise_plane(5150, 64, 64);
        let (k, _) = run_em(&p, &EmConfig::default()).unwrap();
        assert!(k.converged, "ran {} iterations", k.iterations);
        assert!(k.sigma_sq > 1e-3, "{}", k.sigma_sq);
    }

    #[test]
    fn trace_lengths_and_channel_symmetry() {
        let img = synth::gen_noise_image(3, 24, 24);
        for (alpha, len) in [(1, 24), (2, 72), (3, 144)] {
            let ct = extract_ct(&img, &EmConfig::with_alpha(alpha)).unwrap();
            assert_eq!(ct.features.len(), len);
        }
        let gray = RgbImage::from_gray(img.r.clone());
        let ct = extract_ct(&gray, &EmConfig::default()).unwrap();
        assert_eq!(ct.channel(0), ct.channel(1));
        assert_eq!(ct.channel(1), ct.channel(2));
    }

    #[test]
    fn constant_channel_is_flagged_not_fatal() {
        let img = synth::gen_noise_image(8, 20, 20);
        let mixed =
            RgbImage::new(img.r.clone(), Plane::filled(20, 20, 0.3), img.b.clone()).unwrap();
        let ct = extract_ct(&mixed, &EmConfig::default()).unwrap();
        assert_eq!(ct.degenerate, [false, true, false]);
        assert_eq!(ct.degenerate_tag(), "G");
        assert!(ct.channel(1).iter().all(|&v| v == 0.0));

        let flat = RgbImage::from_gray(Plane::filled(20, 20, 0.3));
        assert!(matches!(
            extract_ct(&flat, &EmConfig::default()),
            Err(Error::Extraction(_))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let p = noise_plane(1, 16, 16);
        for cfg in [
            EmConfig::with_alpha(4),
            EmConfig {
                prior_m1: 1.0,
                ..EmConfig::default()
            },
            EmConfig {
                tol: 0.0,
                ..EmConfig::default()
            },
            EmConfig {
                max_iters: 0,
                ..EmConfig::default()
            },
        ] {
            assert!(matches!(run_em(&p, &cfg), Err(Error::Validation(_))));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn posterior_is_strictly_inside_unit_interval(seed in 0u64..10_000, alpha in 1usize..=2) {
            let p = noise_plane(seed, 14, 13);
            let (_, post) = run_em(&p, &EmConfig::with_alpha(alpha)).unwrap();
            prop_assert!(post.data().iter().all(|&w| w > 0.0 && w < 1.0));
        }

        #[test]
        fn run_em_is_bit_deterministic(seed in 0u64..10_000) {
            let p = noise_plane(seed, 16, 16);
            let a = run_em(&p, &EmConfig::default()).unwrap();
            let b = run_em(&p, &EmConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn posterior_respects_residual_order(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, s in 1e-4f64..0.5) {
            let m = InteriorMap { width: 2, height: 1, data: vec![r1, r2] };
            let w = e_step(&m, s * s, 0.5, 1.0);
            if r1 < r2 {
                prop_assert!(w.get(0, 0) >= w.get(1, 0));
            }
        }
    }
}
