use crate::annotation::Point;
use crate::error::{Error, Result};

pub type Quad = [Point; 4];

const MIN_AREA: f64 = 1e-9;

/// Signed shoelace area; positive for counter-clockwise order in a y-up frame.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// True when every turn has the same sign (collinear turns allowed).
pub fn is_convex(q: &Quad) -> bool {
    let mut sign = 0.0f64;
    for i in 0..4 {
        let c = cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
        if c.abs() <= 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

fn oriented(q: &Quad) -> Result<(Vec<Point>, f64)> {
    if q.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegeneratePolygon(f64::NAN));
    }
    let area = polygon_area(q);
    if area.abs() < MIN_AREA {
        return Err(Error::DegeneratePolygon(area.abs()));
    }
    if !is_convex(q) {
        return Err(Error::NonConvexPolygon);
    }
    let mut pts = q.to_vec();
    if area < 0.0 {
        pts.reverse();
    }
    Ok((pts, area.abs()))
}

fn segment_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let (d1, d2) = (cross(a, b, p), cross(a, b, q));
    let t = d1 / (d1 - d2);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland-Hodgman clip of `subject` against the convex counter-clockwise `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (cur_in, prev_in) = (cross(a, b, cur) >= 0.0, cross(a, b, prev) >= 0.0);
            if cur_in {
                if !prev_in {
                    out.push(segment_intersection(prev, cur, a, b));
                }
                out.push(cur);
            } else if prev_in {
                out.push(segment_intersection(prev, cur, a, b));
            }
        }
    }
    out
}

/// Intersection over union of two convex quadrilaterals.
pub fn polygon_iou(a: &Quad, b: &Quad) -> Result<f64> {
    let (pa, area_a) = oriented(a)?;
    let (pb, area_b) = oriented(b)?;
    if a == b {
        return Ok(1.0);
    }
    let inter = clip_convex(&pa, &pb);
    let i = if inter.len() < 3 {
        0.0
    } else {
        polygon_area(&inter).abs()
    };
    let i = i.min(area_a).min(area_b);
    Ok((i / (area_a + area_b - i)).clamp(0.0, 1.0))
}
