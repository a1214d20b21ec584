//! Neighborhood and occlusion corruptions: Gaussian and motion blur,
//! fBm-Perlin clouds, and stripe data gaps.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::raster::{clamp_unit, ImageRaster};
use crate::rng::RngStream;

/// Reflect-101 border index (`dcb|abcd|cba`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// A dense `k x k` kernel, row-major, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionKernel {
    size: usize,
    weights: Vec<f64>,
}

impl ConvolutionKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, col: usize, row: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    /// Outer product of the 1-D Gaussian taps.
    pub fn gaussian(k: usize) -> Result<Self> {
        let taps = gaussian_taps(k)?;
        let weights = taps.iter().flat_map(|a| taps.iter().map(move |b| a * b)).collect();
        Ok(Self { size: k, weights })
    }

    /// Length-`k` line through the kernel center at `angle_deg`
    /// (counter-clockwise on screen), uniform weights on the covered cells.
    pub fn motion(k: usize, angle_deg: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidKernel(0));
        }
        let mut hits = vec![false; k * k];
        let center = (k as f64 - 1.0) / 2.0;
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        let half = (k as f64 - 1.0) / 2.0;
        let samples = 4 * k + 1;
        for s in 0..samples {
            let t = if samples == 1 {
                0.0
            } else {
                -half + 2.0 * half * s as f64 / (samples - 1) as f64
            };
            let col = (center + t * cos).round().clamp(0.0, k as f64 - 1.0) as usize;
            let row = (center - t * sin).round().clamp(0.0, k as f64 - 1.0) as usize;
            hits[row * k + col] = true;
        }
        let n = hits.iter().filter(|&&h| h).count() as f64;
        let weights = hits.iter().map(|&h| if h { 1.0 / n } else { 0.0 }).collect();
        Ok(Self { size: k, weights })
    }

    /// Non-zero taps as `(dx, dy, weight)` offsets from the anchor `k / 2`.
    fn taps(&self) -> Vec<(isize, isize, f64)> {
        let anchor = (self.size / 2) as isize;
        let mut out = Vec::new();
        for row in 0..self.size {
            for col in 0..self.size {
                let w = self.weight(col, row);
                if w != 0.0 {
                    out.push((col as isize - anchor, row as isize - anchor, w));
                }
            }
        }
        out
    }
}

fn gaussian_taps(k: usize) -> Result<Vec<f64>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidKernel(k as i64));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let sigma = (k as f64 - 1.0) / 6.0;
    let r = (k / 2) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// Separable Gaussian blur with `sigma = (k - 1) / 6` and reflect padding.
pub fn gaussian_blur(img: &ImageRaster, k: usize) -> Result<ImageRaster> {
    let taps = gaussian_taps(k)?;
    if k == 1 {
        return Ok(img.clone());
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = (k / 2) as isize;
    let src = img.data();

    let mut horiz = vec![0.0f64; src.len()];
    for y in 0..h {
        let row = y * w * ch;
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, wt) in taps.iter().enumerate() {
                    let sx = reflect(x as isize + t as isize - r, w);
                    acc += wt * f64::from(src[row + sx * ch + c]);
                }
                horiz[row + x * ch + c] = acc;
            }
        }
    }

    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, wt) in taps.iter().enumerate() {
                    let sy = reflect(y as isize + t as isize - r, h);
                    acc += wt * horiz[(sy * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = clamp_unit(acc as f32);
            }
        }
    }
    Ok(ImageRaster::from_parts_unchecked(w, h, ch, out))
}

/// Correlates `img` with a dense kernel anchored at `k / 2`, reflect padding.
pub fn convolve(img: &ImageRaster, kernel: &ConvolutionKernel) -> ImageRaster {
    let taps = kernel.taps();
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let src = img.data();
    let mut out = vec![0.0f32; src.len()];
    let mut acc = vec![0.0f64; ch];
    for y in 0..h {
        for x in 0..w {
            acc.fill(0.0);
            for &(dx, dy, wt) in &taps {
                let sx = reflect(x as isize + dx, w);
                let sy = reflect(y as isize + dy, h);
                let base = (sy * w + sx) * ch;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += wt * f64::from(src[base + c]);
                }
            }
            let base = (y * w + x) * ch;
            for (c, a) in acc.iter().enumerate() {
                out[base + c] = clamp_unit(*a as f32);
            }
        }
    }
    ImageRaster::from_parts_unchecked(w, h, ch, out)
}

pub fn motion_blur(img: &ImageRaster, k: usize, angle_deg: f64) -> Result<ImageRaster> {
    let kernel = ConvolutionKernel::motion(k, angle_deg)?;
    if k == 1 {
        return Ok(img.clone());
    }
    Ok(convolve(img, &kernel))
}

/// Draws a motion-blur direction uniformly from `[0, 180)` degrees.
pub fn sample_motion_angle(rng: &mut RngStream) -> f64 {
    rng.uniform() * 180.0
}

/// Min-max normalized fractal gradient noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PerlinField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl PerlinField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

struct GradientNoise {
    perm: [u8; 512],
}

impl GradientNoise {
    fn new(rng: &mut ChaCha12Rng) -> Self {
        let mut p: Vec<u8> = (0..=255).collect();
        p.shuffle(rng);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = p[i & 255];
        }
        Self { perm }
    }

    #[inline]
    fn grad(hash: u8, x: f64, y: f64) -> f64 {
        match hash & 7 {
            0 => x + y,
            1 => x - y,
            2 => -x + y,
            3 => -x - y,
            4 => x,
            5 => -x,
            6 => y,
            _ => -y,
        }
    }

    #[inline]
    fn fade(t: f64) -> f64 {
        t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let (xf, yf) = (x.floor(), y.floor());
        let xi = (xf as i64 & 255) as usize;
        let yi = (yf as i64 & 255) as usize;
        let (x, y) = (x - xf, y - yf);
        let (u, v) = (Self::fade(x), Self::fade(y));
        let p = &self.perm;
        let aa = p[p[xi] as usize + yi];
        let ab = p[p[xi] as usize + yi + 1];
        let ba = p[p[xi + 1] as usize + yi];
        let bb = p[p[xi + 1] as usize + yi + 1];
        let x1 = lerp(Self::grad(aa, x, y), Self::grad(ba, x - 1.0, y), u);
        let x2 = lerp(Self::grad(ab, x, y - 1.0), Self::grad(bb, x - 1.0, y - 1.0), u);
        lerp(x1, x2, v)
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Sums `octaves` layers of gradient noise, doubling frequency and scaling
/// amplitude by `persistence` each layer, then rescales to `[0, 1]`.
pub fn perlin_field(
    width: usize,
    height: usize,
    octaves: u32,
    period: f64,
    persistence: f64,
    seed: u64,
) -> Result<PerlinField> {
    if period.is_nan() || period < 2.0 {
        return Err(Error::InvalidParameter {
            name: "period",
            value: period,
            reason: "must be >= 2",
        });
    }
    if octaves == 0 {
        return Err(Error::InvalidParameter {
            name: "octaves",
            value: 0.0,
            reason: "must be >= 1",
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let noise = GradientNoise::new(&mut rng);
    // per-octave lattice offsets keep layers from sharing zero crossings
    let offsets: Vec<(f64, f64)> = (0..octaves)
        .map(|_| (rng.random::<f64>() * 256.0, rng.random::<f64>() * 256.0))
        .collect();

    let mut values = vec![0.0f64; width * height];
    for (y, row) in values.chunks_mut(width.max(1)).enumerate().take(height) {
        for (x, out) in row.iter_mut().enumerate() {
            let mut amp = 1.0;
            let mut freq = 1.0 / period;
            let mut acc = 0.0;
            for &(ox, oy) in &offsets {
                acc += amp * noise.sample(x as f64 * freq + ox, y as f64 * freq + oy);
                amp *= persistence;
                freq *= 2.0;
            }
            *out = acc;
        }
    }

    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if span > 1e-12 {
        values.iter_mut().for_each(|v| *v = (*v - lo) / span);
    } else {
        values.fill(0.0);
    }
    Ok(PerlinField { width, height, values })
}

/// Cloud field settings; `period: None` means a quarter of the image width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudShape {
    pub octaves: u32,
    pub period: Option<f64>,
    pub persistence: f64,
}

impl Default for CloudShape {
    fn default() -> Self {
        Self {
            octaves: crate::corruption::CLOUD_OCTAVES,
            period: None,
            persistence: crate::corruption::CLOUD_PERSISTENCE,
        }
    }
}

impl CloudShape {
    fn resolved_period(&self, width: usize) -> f64 {
        self.period.unwrap_or((width as f64 / 4.0).max(2.0))
    }
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Per-pixel cloud opacity: `smoothstep((p - t) / (1 - t))` where the field
/// exceeds the threshold `t`, zero elsewhere.
pub fn cloud_alpha(field: &PerlinField, threshold: f64) -> Vec<f64> {
    field
        .values()
        .iter()
        .map(|&p| {
            if p > threshold && threshold < 1.0 {
                smoothstep((p - threshold) / (1.0 - threshold))
            } else {
                0.0
            }
        })
        .collect()
}

pub fn cloud(img: &ImageRaster, threshold: f64, field_seed: u64, shape: &CloudShape) -> Result<ImageRaster> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            value: threshold,
            reason: "must lie in (0, 1]",
        });
    }
    let field = perlin_field(
        img.width(),
        img.height(),
        shape.octaves,
        shape.resolved_period(img.width()),
        shape.persistence,
        field_seed,
    )?;
    let alpha = cloud_alpha(&field, threshold);
    let ch = img.channels();
    let mut out = img.data().to_vec();
    for (site, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            for v in &mut out[site * ch..(site + 1) * ch] {
                *v = clamp_unit(((1.0 - a) * f64::from(*v) + a) as f32);
            }
        }
    }
    Ok(ImageRaster::from_parts_unchecked(img.width(), img.height(), ch, out))
}

/// Draws `count` non-overlapping stripe offsets, sorted ascending.
pub fn sample_gap_offsets(image_width: usize, count: usize, width: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if count * width >= image_width && count * width > 0 {
        return Err(Error::GapOverflow {
            count,
            width,
            image_width,
        });
    }
    if count == 0 || width == 0 {
        return Ok(Vec::new());
    }
    let free = image_width - count * width;
    let mut slots = sample(rng, free + count, count).into_vec();
    slots.sort_unstable();
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s + i * (width - 1))
        .collect())
}

/// Zeroes full-height stripes starting at the given columns.
pub fn apply_gaps(img: &ImageRaster, offsets: &[usize], width: usize) -> Result<ImageRaster> {
    let (w, ch) = (img.width(), img.channels());
    let mut out = img.data().to_vec();
    for &x0 in offsets {
        if x0 + width > w {
            return Err(Error::GapOverflow {
                count: offsets.len(),
                width,
                image_width: w,
            });
        }
        for y in 0..img.height() {
            let start = (y * w + x0) * ch;
            out[start..start + width * ch].fill(0.0);
        }
    }
    Ok(ImageRaster::from_parts_unchecked(w, img.height(), ch, out))
}

/// `count` vertical stripes of `width` columns at random non-overlapping
/// positions, filled with zero. Returns the image and the stripe offsets.
pub fn data_gaps(
    img: &ImageRaster,
    count: usize,
    width: usize,
    rng: &mut RngStream,
) -> Result<(ImageRaster, Vec<usize>)> {
    let offsets = sample_gap_offsets(img.width(), count, width, rng)?;
    Ok((apply_gaps(img, &offsets, width)?, offsets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, ch: usize) -> ImageRaster {
        ImageRaster::from_fn(w, h, ch, |x, y, c| {
            0.2 + 0.6 * (((x * 31 + y * 17 + c * 7) % 23) as f32 / 22.0)
        })
    }

    #[test]
    fn reflect_101() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn kernels_are_normalized() {
        for k in [1, 3, 5, 7, 9, 11] {
            let s: f64 = ConvolutionKernel::gaussian(k).unwrap().weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        for k in 1..=12 {
            for angle in [0.0, 17.0, 45.0, 90.0, 133.0, 179.9] {
                let s: f64 = ConvolutionKernel::motion(k, angle).unwrap().weights().iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn even_gaussian_kernel_rejected() {
        assert!(matches!(
            gaussian_blur(&textured(4, 4, 1), 4),
            Err(Error::InvalidKernel(4))
        ));
        assert!(matches!(
            gaussian_blur(&textured(4, 4, 1), 0),
            Err(Error::InvalidKernel(0))
        ));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageRaster::filled(20, 15, 3, 0.37);
        let g = gaussian_blur(&img, 11).unwrap();
        let m = motion_blur(&img, 10, 33.0).unwrap();
        for v in g.data().iter().chain(m.data()) {
            assert!((v - 0.37).abs() <= f32::EPSILON * 0.37, "{v}");
        }
    }

    #[test]
    fn impulse_response_is_gaussian_outer_product() {
        let mut data = vec![0.0f32; 81];
        data[4 * 9 + 4] = 1.0;
        let img = ImageRaster::new(9, 9, 1, data).unwrap();
        let out = gaussian_blur(&img, 3).unwrap();
        // sigma = 1/3 for k = 3; oracle built directly from exp()
        let e = (-4.5f64).exp();
        let taps = [e / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        for y in 0..9 {
            for x in 0..9 {
                let expected = if (3..=5).contains(&x) && (3..=5).contains(&y) {
                    taps[x - 3] * taps[y - 3]
                } else {
                    0.0
                };
                assert!((f64::from(out.get(x, y, 0)) - expected).abs() < 1e-6, "({x},{y})");
            }
        }
    }

    #[test]
    fn horizontal_motion_widens_step_to_four_columns() {
        let img = ImageRaster::from_fn(20, 5, 1, |x, _, _| if x >= 8 { 1.0 } else { 0.0 });
        let out = motion_blur(&img, 4, 0.0).unwrap();
        for y in 0..5 {
            let row: Vec<f32> = (0..20).map(|x| out.get(x, y, 0)).collect();
            let partial = row.iter().filter(|&&v| v > 0.0 && v < 1.0).count();
            assert_eq!(partial, 3, "{row:?}");
            let rises = row.windows(2).filter(|w| w[1] > w[0]).count();
            assert_eq!(rises, 4);
            for w in row.windows(2).filter(|w| w[1] > w[0]) {
                assert!((w[1] - w[0] - 0.25).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vertical_motion_kernel_is_a_column() {
        let k = ConvolutionKernel::motion(5, 90.0).unwrap();
        for row in 0..5 {
            for col in 0..5 {
                let expected = if col == 2 { 0.2 } else { 0.0 };
                assert!((k.weight(col, row) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blur_mean_preserved_within_tolerance() {
        let img = textured(64, 64, 3);
        let mean = |r: &ImageRaster| r.data().iter().map(|&v| f64::from(v)).sum::<f64>() / r.data().len() as f64;
        let m0 = mean(&img);
        assert!((mean(&gaussian_blur(&img, 7).unwrap()) - m0).abs() < 1e-3);
        assert!((mean(&motion_blur(&img, 6, 60.0).unwrap()) - m0).abs() < 1e-3);
    }

    #[test]
    fn perlin_is_deterministic_normalized_and_smooth() {
        let a = perlin_field(256, 128, 4, 64.0, 0.5, 9).unwrap();
        let b = perlin_field(256, 128, 4, 64.0, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let lo = a.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
        let mean_step = |d: usize| {
            let mut s = 0.0;
            let mut n = 0;
            for y in 0..a.height() {
                for x in 0..a.width() - d {
                    s += (a.get(x + d, y) - a.get(x, y)).abs();
                    n += 1;
                }
            }
            s / n as f64
        };
        assert!(mean_step(1) < mean_step(8));
        assert_ne!(a, perlin_field(256, 128, 4, 64.0, 0.5, 10).unwrap());
        assert!(perlin_field(8, 8, 4, 1.0, 0.5, 0).is_err());
    }

    #[test]
    fn cloud_threshold_one_is_identity_and_coverage_monotone() {
        let img = textured(128, 128, 3);
        let shape = CloudShape::default();
        assert_eq!(cloud(&img, 1.0, 5, &shape).unwrap(), img);
        let field = perlin_field(128, 128, 4, 32.0, 0.5, 5).unwrap();
        let coverage = |t| cloud_alpha(&field, t).iter().filter(|&&a| a > 0.0).count();
        let covs: Vec<usize> = [0.70, 0.75, 0.80, 0.85, 0.90].into_iter().map(coverage).collect();
        assert!(covs.windows(2).all(|w| w[0] >= w[1]), "{covs:?}");
        assert!(covs[0] > 0);
    }

    #[test]
    fn cloud_only_touches_support() {
        let img = textured(96, 64, 3);
        let shape = CloudShape::default();
        let out = cloud(&img, 0.7, 11, &shape).unwrap();
        let field = perlin_field(96, 64, 4, 24.0, 0.5, 11).unwrap();
        let alpha = cloud_alpha(&field, 0.7);
        for (site, a) in alpha.iter().enumerate() {
            let (x, y) = (site % 96, site / 96);
            if *a == 0.0 {
                assert_eq!(out.pixel(x, y), img.pixel(x, y));
            } else {
                assert!(out.pixel(x, y).iter().zip(img.pixel(x, y)).all(|(o, i)| o >= i));
            }
        }
    }

    #[test]
    fn gaps_zero_exact_column_count() {
        let img = ImageRaster::filled(64, 10, 3, 0.8);
        let mut rng = RngStream::from_seed(3);
        let (out, offsets) = data_gaps(&img, 3, 4, &mut rng).unwrap();
        assert_eq!(offsets.len(), 3);
        let zero_cols = (0..64)
            .filter(|&x| (0..10).all(|y| out.pixel(x, y).iter().all(|&v| v == 0.0)))
            .count();
        assert_eq!(zero_cols, 12);
        let (again, offsets2) = data_gaps(&img, 3, 4, &mut RngStream::from_seed(3)).unwrap();
        assert_eq!((again, offsets2), (out, offsets));
    }

    #[test]
    fn gap_overflow() {
        let img = ImageRaster::filled(12, 2, 1, 0.5);
        let mut rng = RngStream::from_seed(1);
        assert!(matches!(
            data_gaps(&img, 3, 4, &mut rng),
            Err(Error::GapOverflow { .. })
        ));
        assert!(data_gaps(&img, 2, 5, &mut rng).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn gap_offsets_never_overlap(w in 2usize..200, count in 0usize..8, width in 0usize..10, seed in 0u64..1000) {
            proptest::prop_assume!(count * width < w);
            let offs = sample_gap_offsets(w, count, width, &mut RngStream::from_seed(seed)).unwrap();
            for pair in offs.windows(2) {
                proptest::prop_assert!(pair[0] + width <= pair[1]);
            }
            if let Some(&last) = offs.last() {
                proptest::prop_assert!(last + width <= w);
            }
        }
    }
}
