use trackeval_core::{BBox, Frame};

const PRED_VALUE: f32 = 1.0;
const GT_VALUE: f32 = 0.0;

/// Pixels on the one-pixel outline of `b`, clipped to the image. The box
/// covers columns `floor(x_tl) ..= ceil(x_br) - 1`, likewise for rows.
pub fn outline_pixels(b: &BBox, width: usize, height: usize) -> Vec<(usize, usize)> {
    let x0 = b.x_tl().floor() as i64;
    let y0 = b.y_tl().floor() as i64;
    let x1 = (b.x_br().ceil() as i64 - 1).max(x0);
    let y1 = (b.y_br().ceil() as i64 - 1).max(y0);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
    let mut out = Vec::new();
    for x in x0..=x1 {
        for y in [y0, y1] {
            if inside(x, y) {
                out.push((x as usize, y as usize));
            }
        }
    }
    for y in y0 + 1..y1 {
        for x in [x0, x1] {
            if inside(x, y) {
                out.push((x as usize, y as usize));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Ground truth in black, then the prediction in white on top.
pub fn render_overlay(frame: &Frame, pred: &BBox, gt: Option<&BBox>) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let mut paint: Vec<Option<f32>> = vec![None; w * h];
    if let Some(g) = gt {
        for (x, y) in outline_pixels(g, w, h) {
            paint[y * w + x] = Some(GT_VALUE);
        }
    }
    for (x, y) in outline_pixels(pred, w, h) {
        paint[y * w + x] = Some(PRED_VALUE);
    }
    frame.map_pixels(|i, v| paint[i].unwrap_or(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn outline_of_integer_box() {
        let p = outline_pixels(&bb(2.0, 3.0, 6.0, 6.0), 20, 20);
        // 4 columns by 3 rows: perimeter of a 4x3 block
        assert_eq!(p.len(), 10);
        assert!(p.contains(&(2, 3)) && p.contains(&(5, 5)));
        assert!(!p.contains(&(3, 4)));
    }

    #[test]
    fn clipped_and_degenerate() {
        assert!(outline_pixels(&bb(-10.0, -10.0, -2.0, -2.0), 20, 20).is_empty());
        let p = outline_pixels(&bb(18.5, 0.0, 30.0, 2.0), 20, 20);
        assert!(p.iter().all(|&(x, y)| x < 20 && y < 20));
        assert_eq!(outline_pixels(&bb(4.2, 4.2, 4.3, 4.3), 20, 20), vec![(4, 4)]);
    }

    #[test]
    fn prediction_equal_to_gt_coincides() {
        let f = Frame::new(16, 12, vec![0.5; 192], 3, 30.0).unwrap();
        let b = bb(2.5, 1.0, 9.0, 8.2);
        let img = render_overlay(&f, &b, Some(&b));
        let changed: Vec<usize> = (0..192).filter(|&i| img.pixels()[i] != 0.5).collect();
        let want: Vec<usize> = outline_pixels(&b, 16, 12).iter().map(|&(x, y)| y * 16 + x).collect();
        let mut changed = changed;
        changed.sort_unstable();
        let mut want = want;
        want.sort_unstable();
        assert_eq!(changed, want);
        assert!(changed.iter().all(|&i| img.pixels()[i] == PRED_VALUE));
        assert_eq!(img.index(), 3);
    }
}
