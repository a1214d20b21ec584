//! Rotation, scaling and translation applied jointly to an image and its
//! annotations.
//!
//! The canvas size never changes; content leaving the frame is lost and
//! uncovered pixels are filled with 0. Images are resampled bilinearly,
//! class masks with nearest neighbor, and annotation points are pushed
//! through the forward map of the same [`AffineMap`].
//!
//! Positive rotation angles follow the standard rotation matrix in pixel
//! coordinates (x right, y down), so a 90 degree turn sends the input pixel
//! `(u, v)` to `(H - 1 - v, u)`.

use crate::annotation::{AnnotationSet, HorizontalBox, OrientedBox, Point, ReferringRecord, RegionBox, SegMask};
use crate::error::{Error, Result};
use crate::raster::ImageRaster;
use crate::rng::RngStream;

/// Affine map in continuous pixel coordinates, stored both as the
/// output-to-input matrix used for resampling and its forward inverse used
/// for annotation points. Each is `[a, b, tx, c, d, ty]` for
/// `(x, y) -> (a x + b y + tx, c x + d y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    inverse: [f64; 6],
    forward: [f64; 6],
}

fn invert(m: &[f64; 6]) -> Result<[f64; 6]> {
    let [a, b, tx, c, d, ty] = *m;
    let det = a * d - b * c;
    if det.abs() <= 1e-9 {
        return Err(Error::InvalidParameter {
            name: "affine determinant",
            value: det,
            reason: "map is not invertible",
        });
    }
    let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
    Ok([ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)])
}

/// Snaps values within 1e-12 of 0 or +-1, so quarter turns are exact.
fn snap(v: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (v - target).abs() < 1e-12 {
            return target;
        }
    }
    v
}

impl AffineMap {
    pub fn from_forward(forward: [f64; 6]) -> Result<Self> {
        Ok(Self {
            inverse: invert(&forward)?,
            forward,
        })
    }

    pub fn identity() -> Self {
        let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        Self { inverse: m, forward: m }
    }

    /// Rotation by `angle_deg` about the image center `(W/2, H/2)`.
    pub fn rotation(angle_deg: f64, width: usize, height: usize) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let (s, c) = (snap(s), snap(c));
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        // p' = center + R (p - center)
        let forward = [c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy];
        let inverse = [c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy];
        Self { inverse, forward }
    }

    /// Uniform scaling by `ratio` about the image center.
    pub fn scaling(ratio: f64, width: usize, height: usize) -> Result<Self> {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        Self::from_forward([ratio, 0.0, cx * (1.0 - ratio), 0.0, ratio, cy * (1.0 - ratio)])
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            forward: [1.0, 0.0, dx, 0.0, 1.0, dy],
            inverse: [1.0, 0.0, -dx, 0.0, 1.0, -dy],
        }
    }

    /// Output-to-input matrix.
    pub fn inverse_matrix(&self) -> [f64; 6] {
        self.inverse
    }

    pub fn forward_matrix(&self) -> [f64; 6] {
        self.forward
    }

    #[inline]
    fn apply(m: &[f64; 6], p: Point) -> Point {
        [m[0] * p[0] + m[1] * p[1] + m[2], m[3] * p[0] + m[4] * p[1] + m[5]]
    }

    /// Maps an input point to its output location.
    pub fn map_point(&self, p: Point) -> Point {
        Self::apply(&self.forward, p)
    }

    /// Maps an output location back to where it samples the input.
    pub fn source_point(&self, q: Point) -> Point {
        Self::apply(&self.inverse, q)
    }
}

/// Bilinear resampling with zero fill outside the input frame.
pub fn warp_image(img: &ImageRaster, map: &AffineMap) -> ImageRaster {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let src = img.data();
    let mut out = vec![0.0f32; src.len()];
    let fetch = |i: i64, j: i64, c: usize| -> f64 {
        if i < 0 || j < 0 || i >= w as i64 || j >= h as i64 {
            0.0
        } else {
            f64::from(src[(j as usize * w + i as usize) * ch + c])
        }
    };
    for y in 0..h {
        for x in 0..w {
            let [px, py] = map.source_point([x as f64 + 0.5, y as f64 + 0.5]);
            let (u, v) = (px - 0.5, py - 0.5);
            let (u0, v0) = (u.floor(), v.floor());
            let (fx, fy) = (u - u0, v - v0);
            let (i, j) = (u0 as i64, v0 as i64);
            if i < -1 || j < -1 || i >= w as i64 || j >= h as i64 {
                continue;
            }
            let base = (y * w + x) * ch;
            for c in 0..ch {
                let mut acc = (1.0 - fx) * (1.0 - fy) * fetch(i, j, c);
                if fx != 0.0 {
                    acc += fx * (1.0 - fy) * fetch(i + 1, j, c);
                }
                if fy != 0.0 {
                    acc += (1.0 - fx) * fy * fetch(i, j + 1, c);
                    if fx != 0.0 {
                        acc += fx * fy * fetch(i + 1, j + 1, c);
                    }
                }
                out[base + c] = (acc as f32).clamp(0.0, 1.0);
            }
        }
    }
    ImageRaster::from_parts_unchecked(w, h, ch, out)
}

/// Nearest-neighbor resampling of a class mask; uncovered pixels get the
/// mask's background class.
pub fn warp_mask(mask: &SegMask, map: &AffineMap) -> SegMask {
    let (w, h) = (mask.width, mask.height);
    let mut classes = vec![mask.background; w * h];
    for y in 0..h {
        for x in 0..w {
            let [px, py] = map.source_point([x as f64 + 0.5, y as f64 + 0.5]);
            let (i, j) = (px.floor(), py.floor());
            if i >= 0.0 && j >= 0.0 && i < w as f64 && j < h as f64 {
                classes[y * w + x] = mask.get(i as usize, j as usize);
            }
        }
    }
    SegMask {
        width: w,
        height: h,
        classes,
        palette: mask.palette.clone(),
        background: mask.background,
    }
}

/// Frame-clip rule: a mapped box survives iff its center lies in
/// `[0, W] x [0, H]`; survivors have their corners clamped to the frame.
fn clip_corners(corners: [Point; 4], width: usize, height: usize) -> Option<[Point; 4]> {
    let (w, h) = (width as f64, height as f64);
    let cx = corners.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = corners.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    if !(0.0..=w).contains(&cx) || !(0.0..=h).contains(&cy) {
        return None;
    }
    Some(corners.map(|[x, y]| [x.clamp(0.0, w), y.clamp(0.0, h)]))
}

fn map_corners(map: &AffineMap, corners: &[Point; 4]) -> [Point; 4] {
    corners.map(|p| map.map_point(p))
}

fn hull(corners: &[Point; 4]) -> [f64; 4] {
    let xs = corners.iter().map(|p| p[0]);
    let ys = corners.iter().map(|p| p[1]);
    [
        xs.clone().fold(f64::INFINITY, f64::min),
        ys.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
        ys.fold(f64::NEG_INFINITY, f64::max),
    ]
}

fn transform_horizontal(map: &AffineMap, rect: [f64; 4], width: usize, height: usize) -> Option<[f64; 4]> {
    let [x0, y0, x1, y1] = rect;
    let mapped = map_corners(map, &[[x0, y0], [x1, y0], [x1, y1], [x0, y1]]);
    let clipped = clip_corners(RegionBox::Horizontal(hull(&mapped)).corners(), width, height)?;
    Some(hull(&clipped))
}

/// Pushes annotations through `map` for a `width x height` frame.
pub fn transform_annotations(
    ann: &AnnotationSet,
    map: &AffineMap,
    width: usize,
    height: usize,
) -> Result<AnnotationSet> {
    ann.validate(None)
        .map_err(|e| Error::UnsupportedAnnotation(e.to_string()))?;
    Ok(match ann {
        AnnotationSet::ClassLabel { .. } => ann.clone(),
        AnnotationSet::SegMask(mask) => {
            if (mask.width, mask.height) != (width, height) {
                return Err(Error::ShapeMismatch(format!(
                    "mask {}x{} vs frame {width}x{height}",
                    mask.width, mask.height
                )));
            }
            AnnotationSet::SegMask(warp_mask(mask, map))
        }
        AnnotationSet::OrientedBoxes { boxes } => AnnotationSet::OrientedBoxes {
            boxes: boxes
                .iter()
                .filter_map(|b| {
                    clip_corners(map_corners(map, &b.corners), width, height).map(|corners| OrientedBox {
                        corners,
                        category: b.category.clone(),
                        difficult: b.difficult,
                    })
                })
                .collect(),
        },
        AnnotationSet::HorizontalBoxes { boxes } => AnnotationSet::HorizontalBoxes {
            boxes: boxes
                .iter()
                .filter_map(|b| {
                    let [xmin, ymin, xmax, ymax] =
                        transform_horizontal(map, [b.xmin, b.ymin, b.xmax, b.ymax], width, height)?;
                    Some(HorizontalBox {
                        xmin,
                        ymin,
                        xmax,
                        ymax,
                        category: b.category.clone(),
                    })
                })
                .collect(),
        },
        AnnotationSet::ReferringRecords { records } => AnnotationSet::ReferringRecords {
            records: records
                .iter()
                .filter_map(|r| {
                    let region = match r.region {
                        RegionBox::Oriented(c) => {
                            RegionBox::Oriented(clip_corners(map_corners(map, &c), width, height)?)
                        }
                        RegionBox::Horizontal(rect) => {
                            RegionBox::Horizontal(transform_horizontal(map, rect, width, height)?)
                        }
                    };
                    Some(ReferringRecord {
                        id: r.id.clone(),
                        expression: r.expression.clone(),
                        region,
                    })
                })
                .collect(),
        },
    })
}

fn apply_map(img: &ImageRaster, ann: &AnnotationSet, map: &AffineMap) -> Result<(ImageRaster, AnnotationSet)> {
    let ann = transform_annotations(ann, map, img.width(), img.height())?;
    Ok((warp_image(img, map), ann))
}

pub fn rotate(img: &ImageRaster, ann: &AnnotationSet, angle_deg: f64) -> Result<(ImageRaster, AnnotationSet)> {
    apply_map(img, ann, &AffineMap::rotation(angle_deg, img.width(), img.height()))
}

pub fn scale(img: &ImageRaster, ann: &AnnotationSet, ratio: f64) -> Result<(ImageRaster, AnnotationSet)> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "ratio",
            value: ratio,
            reason: "must be positive",
        });
    }
    apply_map(img, ann, &AffineMap::scaling(ratio, img.width(), img.height())?)
}

/// Shift by an explicit integer offset: `out(x, y) = in(x - dx, y - dy)`.
pub fn translate_by(img: &ImageRaster, ann: &AnnotationSet, dx: i64, dy: i64) -> Result<(ImageRaster, AnnotationSet)> {
    apply_map(img, ann, &AffineMap::translation(dx as f64, dy as f64))
}

/// Draws `dx` then `dy` uniformly from `-d..=d`.
pub fn sample_offset(max_offset: u32, rng: &mut RngStream) -> (i64, i64) {
    let d = i64::from(max_offset);
    let dx = rng.int_inclusive(-d, d);
    let dy = rng.int_inclusive(-d, d);
    (dx, dy)
}

/// Random translation bounded by `max_offset`; returns the drawn offset too.
pub fn translate(
    img: &ImageRaster,
    ann: &AnnotationSet,
    max_offset: u32,
    rng: &mut RngStream,
) -> Result<(ImageRaster, AnnotationSet, (i64, i64))> {
    let (dx, dy) = sample_offset(max_offset, rng);
    let (out, ann) = translate_by(img, ann, dx, dy)?;
    Ok((out, ann, (dx, dy)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label() -> AnnotationSet {
        AnnotationSet::ClassLabel {
            category_id: 3,
            category: "airport".into(),
        }
    }

    fn boxes(corners: [Point; 4]) -> AnnotationSet {
        AnnotationSet::OrientedBoxes {
            boxes: vec![OrientedBox {
                corners,
                category: "ship".into(),
                difficult: false,
            }],
        }
    }

    fn pattern(n: usize) -> ImageRaster {
        ImageRaster::from_fn(n, n, 3, |x, y, c| ((x * 13 + y * 7 + c * 5) % 256) as f32 / 255.0)
    }

    #[test]
    fn quarter_turn_is_a_permutation() {
        let n = 37;
        let img = pattern(n);
        let (out, _) = rotate(&img, &label(), 90.0).unwrap();
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.pixel(x, y), img.pixel(y, n - 1 - x), "({x},{y})");
            }
        }
    }

    #[test]
    fn quarter_turn_moves_pixel_10_20_to_79_10() {
        let mut data = vec![0.0f32; 100 * 100];
        data[20 * 100 + 10] = 1.0;
        let img = ImageRaster::new(100, 100, 1, data).unwrap();
        let (out, _) = rotate(&img, &label(), 90.0).unwrap();
        let hot = out.data().iter().position(|&v| v == 1.0).unwrap();
        assert_eq!((hot % 100, hot / 100), (79, 10));
        let map = AffineMap::rotation(90.0, 100, 100);
        assert_eq!(map.map_point([10.5, 20.5]), [79.5, 10.5]);
    }

    #[test]
    fn scale_about_center() {
        let map = AffineMap::scaling(0.5, 100, 100).unwrap();
        assert_eq!(map.map_point([80.0, 60.0]), [65.0, 55.0]);
        let img = pattern(16);
        let ann = boxes([[2.0, 2.0], [9.0, 2.0], [9.0, 7.0], [2.0, 7.0]]);
        assert_eq!(scale(&img, &ann, 1.0).unwrap(), (img, ann));
    }

    #[test]
    fn forced_translation_shifts_columns_and_boxes() {
        let img = pattern(20);
        let ann = boxes([[2.0, 2.0], [9.0, 2.0], [9.0, 7.0], [2.0, 7.0]]);
        let (out, moved) = translate_by(&img, &ann, 5, 0).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                if x >= 5 {
                    assert_eq!(out.pixel(x, y), img.pixel(x - 5, y));
                } else {
                    assert!(out.pixel(x, y).iter().all(|&v| v == 0.0));
                }
            }
        }
        assert_eq!(moved, boxes([[7.0, 2.0], [14.0, 2.0], [14.0, 7.0], [7.0, 7.0]]));
        assert_eq!(translate_by(&img, &ann, 0, 0).unwrap(), (img, ann));
    }

    #[test]
    fn box_with_center_outside_is_dropped_and_survivors_clamped() {
        let ann = AnnotationSet::OrientedBoxes {
            boxes: vec![
                OrientedBox {
                    corners: [[1.0, 1.0], [6.0, 1.0], [6.0, 4.0], [1.0, 4.0]],
                    category: "a".into(),
                    difficult: false,
                },
                OrientedBox {
                    corners: [[14.0, 1.0], [19.0, 1.0], [19.0, 4.0], [14.0, 4.0]],
                    category: "b".into(),
                    difficult: false,
                },
            ],
        };
        let out = transform_annotations(&ann, &AffineMap::translation(-4.0, 0.0), 20, 20).unwrap();
        let AnnotationSet::OrientedBoxes { boxes } = out else {
            unreachable!()
        };
        // center of "a" moves to x = -0.5 and is dropped; "b" survives untouched
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].category, "b");
        let out = transform_annotations(&ann, &AffineMap::translation(3.0, 0.0), 20, 20).unwrap();
        let AnnotationSet::OrientedBoxes { boxes } = out else {
            unreachable!()
        };
        assert_eq!(boxes[1].corners[1], [20.0, 1.0]);
    }

    #[test]
    fn oriented_box_rotated_45_matches_per_corner_rotation() {
        let corners = [[40.0, 45.0], [60.0, 45.0], [60.0, 55.0], [40.0, 55.0]];
        let out = transform_annotations(&boxes(corners), &AffineMap::rotation(45.0, 100, 100), 100, 100).unwrap();
        let AnnotationSet::OrientedBoxes { boxes: got } = out else {
            unreachable!()
        };
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (p, q) in corners.iter().zip(got[0].corners) {
            let (dx, dy) = (p[0] - 50.0, p[1] - 50.0);
            let expected = [50.0 + r * dx - r * dy, 50.0 + r * dx + r * dy];
            assert!((q[0] - expected[0]).abs() < 1e-9 && (q[1] - expected[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_quarter_turn_is_permutation_with_nearest_neighbor() {
        let n = 11;
        let classes: Vec<u8> = (0..n * n).map(|i| (i % 7) as u8).collect();
        let mask = SegMask::new(n, n, classes).unwrap();
        let img = ImageRaster::filled(n, n, 1, 0.5);
        let (_, out) = rotate(&img, &AnnotationSet::SegMask(mask.clone()), 90.0).unwrap();
        let AnnotationSet::SegMask(out) = out else {
            unreachable!()
        };
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.get(x, y), mask.get(y, n - 1 - x));
            }
        }
        // 45 degrees: every label is one of the originals or background
        let (_, out) = rotate(&img, &AnnotationSet::SegMask(mask), 45.0).unwrap();
        let AnnotationSet::SegMask(out) = out else {
            unreachable!()
        };
        assert!(out.classes.iter().all(|&c| c < 7));
    }

    #[test]
    fn horizontal_boxes_become_hulls() {
        let ann = AnnotationSet::HorizontalBoxes {
            boxes: vec![HorizontalBox {
                xmin: 40.0,
                ymin: 45.0,
                xmax: 60.0,
                ymax: 55.0,
                category: "car".into(),
            }],
        };
        let out = transform_annotations(&ann, &AffineMap::rotation(90.0, 100, 100), 100, 100).unwrap();
        let AnnotationSet::HorizontalBoxes { boxes } = out else {
            unreachable!()
        };
        assert_eq!(
            [boxes[0].xmin, boxes[0].ymin, boxes[0].xmax, boxes[0].ymax],
            [45.0, 40.0, 55.0, 60.0]
        );
    }

    #[test]
    fn class_labels_invariant() {
        let img = pattern(12);
        assert_eq!(rotate(&img, &label(), 33.0).unwrap().1, label());
        assert_eq!(scale(&img, &label(), 0.6).unwrap().1, label());
        let mut rng = RngStream::from_seed(0);
        assert_eq!(translate(&img, &label(), 20, &mut rng).unwrap().1, label());
    }

    #[test]
    fn rotate_back_recovers_inscribed_disk() {
        let n = 96;
        let img = ImageRaster::from_fn(n, n, 3, |x, y, c| {
            0.5 + 0.3 * ((x as f32 * 0.11 + c as f32).sin() * (y as f32 * 0.09).cos())
        });
        let (fwd, _) = rotate(&img, &label(), 33.0).unwrap();
        let (back, _) = rotate(&fwd, &label(), -33.0).unwrap();
        let r = n as f64 / 2.0 - 2.0;
        let (mut err, mut count) = (0.0, 0);
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = (x as f64 + 0.5 - n as f64 / 2.0, y as f64 + 0.5 - n as f64 / 2.0);
                if dx * dx + dy * dy <= r * r {
                    for c in 0..3 {
                        err += f64::from((back.get(x, y, c) - img.get(x, y, c)).abs());
                        count += 1;
                    }
                }
            }
        }
        assert!(err / f64::from(count) < 2.0 / 255.0, "{}", err / f64::from(count));
    }

    #[test]
    fn singular_map_rejected() {
        assert!(AffineMap::from_forward([0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn kept_box_count_shrinks_with_displacement() {
        let mut corners = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                let (x, y) = (2.0 + i as f64 * 12.0, 2.0 + j as f64 * 12.0);
                corners.push(OrientedBox {
                    corners: [[x, y], [x + 6.0, y], [x + 6.0, y + 6.0], [x, y + 6.0]],
                    category: "c".into(),
                    difficult: false,
                });
            }
        }
        let ann = AnnotationSet::OrientedBoxes { boxes: corners };
        let img = ImageRaster::filled(72, 72, 1, 0.5);
        let mean_kept = |d: u32| {
            let mut total = 0usize;
            for seed in 0..100 {
                let mut rng = RngStream::from_seed(seed);
                let (_, out, _) = translate(&img, &ann, d, &mut rng).unwrap();
                let AnnotationSet::OrientedBoxes { boxes } = out else {
                    unreachable!()
                };
                total += boxes.len();
            }
            total as f64 / 100.0
        };
        let kept: Vec<f64> = [0, 15, 25, 35].into_iter().map(mean_kept).collect();
        assert!(kept.windows(2).all(|w| w[1] <= w[0]), "{kept:?}");
    }
}
