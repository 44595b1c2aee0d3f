//! Brush geometry shared by the server and the browser client.

use super::{MaskError, MaskLayer};

/// Sets every pixel whose integer center lies within `radius` (closed) of
/// the polyline through `points`. Pixels outside the raster are clipped.
pub fn rasterize_stroke(
    points: &[(f64, f64)],
    radius: f64,
    width: u32,
    height: u32,
) -> Result<MaskLayer, MaskError> {
    if points.is_empty() {
        return Err(MaskError::EmptyPolyline);
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(MaskError::InvalidRadius(radius));
    }
    let mut layer = MaskLayer::empty(width, height);
    if width == 0 || height == 0 {
        return Ok(layer);
    }
    let first = [(points[0], points[0])];
    let segments: Vec<((f64, f64), (f64, f64))> = if points.len() == 1 {
        first.to_vec()
    } else {
        points.windows(2).map(|w| (w[0], w[1])).collect()
    };
    for (a, b) in segments {
        let x0 = (a.0.min(b.0) - radius).floor().max(0.0);
        let x1 = (a.0.max(b.0) + radius).ceil().min(f64::from(width - 1));
        let y0 = (a.1.min(b.1) - radius).floor().max(0.0);
        let y1 = (a.1.max(b.1) + radius).ceil().min(f64::from(height - 1));
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as u32..=y1 as u32 {
            for x in x0 as u32..=x1 as u32 {
                if !layer.get(x, y) && within(f64::from(x), f64::from(y), a, b, radius) {
                    layer.set(x, y, true);
                }
            }
        }
    }
    Ok(layer)
}

// Distance test kept in squared form; the interior case compares
// cross^2 <= r^2 * |d|^2 so integer inputs are decided exactly.
fn within(px: f64, py: f64, a: (f64, f64), b: (f64, f64), r: f64) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (ax, ay) = (px - a.0, py - a.1);
    let r2 = r * r;
    let len2 = dx * dx + dy * dy;
    let along = ax * dx + ay * dy;
    if len2 == 0.0 || along <= 0.0 {
        return ax * ax + ay * ay <= r2;
    }
    if along >= len2 {
        let (bx, by) = (px - b.0, py - b.1);
        return bx * bx + by * by <= r2;
    }
    let cross = dx * ay - dy * ax;
    cross * cross <= r2 * len2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_pixels(l: &MaskLayer) -> Vec<(u32, u32)> {
        let mut v = Vec::new();
        for y in 0..l.height() {
            for x in 0..l.width() {
                if l.get(x, y) {
                    v.push((x, y));
                }
            }
        }
        v
    }

    #[test]
    fn zero_radius_tap_sets_one_pixel() {
        let l = rasterize_stroke(&[(5.0, 5.0)], 0.0, 10, 10).unwrap();
        assert_eq!(set_pixels(&l), [(5, 5)]);
    }

    #[test]
    fn unit_radius_tap_is_a_plus_sign() {
        let l = rasterize_stroke(&[(5.0, 5.0)], 1.0, 10, 10).unwrap();
        assert_eq!(set_pixels(&l), [(5, 4), (4, 5), (5, 5), (6, 5), (5, 6)]);
    }

    #[test]
    fn zero_radius_segment_hits_collinear_centers() {
        let l = rasterize_stroke(&[(0.0, 0.0), (3.0, 0.0)], 0.0, 10, 10).unwrap();
        assert_eq!(set_pixels(&l), [(0, 0), (1, 0), (2, 0), (3, 0)]);
    }

    #[test]
    fn strokes_clip_at_the_border() {
        let l = rasterize_stroke(&[(-5.0, -5.0), (-1.0, 0.0)], 1.0, 4, 4).unwrap();
        assert_eq!(set_pixels(&l), [(0, 0)]);
        let l = rasterize_stroke(&[(100.0, 100.0)], 2.0, 4, 4).unwrap();
        assert_eq!(l.area(), 0);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(rasterize_stroke(&[], 1.0, 4, 4), Err(MaskError::EmptyPolyline));
        assert!(matches!(
            rasterize_stroke(&[(0.0, 0.0)], -1.0, 4, 4),
            Err(MaskError::InvalidRadius(_))
        ));
    }
}
