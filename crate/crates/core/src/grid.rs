//! Scalar-grid helpers shared by the raster, cascade and label modules.

use crate::par;

/// Bilinear resampling of a `w`×`h` grid onto `tw`×`th`, pixel centres
/// aligned (half-pixel convention) and coordinates clamped at the border.
pub(crate) fn resize_bilinear(src: &[f64], w: usize, h: usize, tw: usize, th: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), w * h);
    let mut out = vec![0.0; tw * th];
    let sx = w as f64 / tw as f64;
    let sy = h as f64 / th as f64;
    par::for_each_chunk_mut(&mut out, tw, |y, row| {
        let (y0, y1, fy) = source_coord(y, sy, h);
        for (x, px) in row.iter_mut().enumerate() {
            let (x0, x1, fx) = source_coord(x, sx, w);
            let top = lerp(src[y0 * w + x0], src[y0 * w + x1], fx);
            let bot = lerp(src[y1 * w + x0], src[y1 * w + x1], fx);
            *px = lerp(top, bot, fy);
        }
    });
    out
}

/// 2× bilinear upsampling to explicit target dimensions.
pub(crate) fn upsample(src: &[f64], w: usize, h: usize, tw: usize, th: usize) -> Vec<f64> {
    resize_bilinear(src, w, h, tw, th)
}

#[inline]
fn source_coord(i: usize, scale: f64, n: usize) -> (usize, usize, f64) {
    let c = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - i0 as f64)
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

/// 3×3 median with clamped borders.
pub(crate) fn median3x3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut out, w, |y, row| {
        let mut win = [0.0f64; 9];
        for (x, px) in row.iter_mut().enumerate() {
            let mut k = 0;
            for dy in -1i64..=1 {
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                for dx in -1i64..=1 {
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    win[k] = src[yy * w + xx];
                    k += 1;
                }
            }
            win.sort_by(|a, b| a.total_cmp(b));
            *px = win[4];
        }
    });
    out
}

/// Mirrors every row of a grid.
pub(crate) fn flip_horizontal(src: &[f64], w: usize) -> Vec<f64> {
    let mut out = src.to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    out
}
