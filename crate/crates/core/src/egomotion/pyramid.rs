use super::EgoError;
use crate::geom::Frame;

/// Smallest side any pyramid level may have.
pub const MIN_LEVEL_SIDE: usize = 8;

/// Level 0 is the input; each further level halves the previous one with 2×2
/// box averaging (odd trailing rows/columns are dropped).
pub fn build_pyramid(frame: &Frame, levels: usize) -> Result<Vec<Frame>, EgoError> {
    let too_small =
        || EgoError::TooSmall { width: frame.width(), height: frame.height(), levels };
    if levels == 0 {
        return Err(too_small());
    }
    let shift = levels - 1;
    if (frame.width() >> shift) < MIN_LEVEL_SIDE || (frame.height() >> shift) < MIN_LEVEL_SIDE {
        return Err(too_small());
    }
    let mut out = Vec::with_capacity(levels);
    out.push(frame.clone());
    for _ in 1..levels {
        let prev = out.last().expect("non-empty");
        let w = prev.width() / 2;
        let h = prev.height() / 2;
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s = prev.get(2 * x, 2 * y)
                    + prev.get(2 * x + 1, 2 * y)
                    + prev.get(2 * x, 2 * y + 1)
                    + prev.get(2 * x + 1, 2 * y + 1);
                px.push((s * 0.25).clamp(0.0, 1.0));
            }
        }
        let f = Frame::new(w, h, px, frame.index(), 1.0)?;
        out.push(f);
    }
    Ok(out)
}
