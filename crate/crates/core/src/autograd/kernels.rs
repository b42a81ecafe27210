//! Raw loops behind the differentiable ops. All buffers are row-major and
//! describe a single image plane stack `[channels, height, width]` unless a
//! batch axis is stated.

use super::tensor::Real;

pub(crate) fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Unfolds `x: [c, h, w]` into `cols: [c*k*k, ho*wo]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut [T],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let plane = ho * wo;
    for ci in 0..c {
        let src_plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &src_plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        // ix = ox + kx - pad must land in [0, w)
                        let lo = pad.saturating_sub(kx).min(wo);
                        let hi = (w + pad).saturating_sub(kx).min(wo).max(lo);
                        drow[..lo].fill(T::zero());
                        drow[hi..].fill(T::zero());
                        let s0 = lo + kx - pad;
                        drow[lo..hi].copy_from_slice(&srow[s0..s0 + (hi - lo)]);
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dx: [c, h, w]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im<T: Real>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    dx: &mut [T],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let plane = ho * wo;
    for ci in 0..c {
        let dst_plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let srow = &src[oy * wo..(oy + 1) * wo];
                    let drow = &mut dst_plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        let lo = pad.saturating_sub(kx).min(wo);
                        let hi = (w + pad).saturating_sub(kx).min(wo).max(lo);
                        let s0 = lo + kx - pad;
                        for (d, s) in drow[s0..s0 + (hi - lo)].iter_mut().zip(&srow[lo..hi]) {
                            *d = *d + *s;
                        }
                    } else {
                        for (ox, s) in srow.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                drow[ix as usize] = drow[ix as usize] + *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Source taps for a 2x bilinear up-sample with half-pixel centres
/// (`align_corners = false`): `(lo, hi, weight_lo, weight_hi)` per output index.
pub(crate) fn bilinear_taps(n_in: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            let frac = src - lo as f64;
            (lo, hi, 1.0 - frac, frac)
        })
        .collect()
}

pub(crate) fn upsample2x<T: Real>(x: &[T], planes: usize, h: usize, w: usize, out: &mut [T]) {
    let ty = bilinear_taps(h);
    let tx = bilinear_taps(w);
    let tx: Vec<_> = tx
        .iter()
        .map(|&(a, b, wa, wb)| (a, b, T::from_f64_lossy(wa), T::from_f64_lossy(wb)))
        .collect();
    let (h2, w2) = (2 * h, 2 * w);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            let r0 = &src[y0 * w..(y0 + 1) * w];
            let r1 = &src[y1 * w..(y1 + 1) * w];
            let drow = &mut dst[oy * w2..(oy + 1) * w2];
            for (d, &(x0, x1, wx0, wx1)) in drow.iter_mut().zip(&tx) {
                let top = r0[x0] * wx0 + r0[x1] * wx1;
                let bot = r1[x0] * wx0 + r1[x1] * wx1;
                *d = top * wy0 + bot * wy1;
            }
        }
    }
}

pub(crate) fn upsample2x_backward<T: Real>(
    dy: &[T],
    planes: usize,
    h: usize,
    w: usize,
    dx: &mut [T],
) {
    let ty = bilinear_taps(h);
    let tx: Vec<_> = bilinear_taps(w)
        .iter()
        .map(|&(a, b, wa, wb)| (a, b, T::from_f64_lossy(wa), T::from_f64_lossy(wb)))
        .collect();
    let (h2, w2) = (2 * h, 2 * w);
    let mut row = vec![T::zero(); w];
    for p in 0..planes {
        let src = &dy[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            row.fill(T::zero());
            for (g, &(x0, x1, wx0, wx1)) in src[oy * w2..(oy + 1) * w2].iter().zip(&tx) {
                row[x0] = row[x0] + *g * wx0;
                row[x1] = row[x1] + *g * wx1;
            }
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            for (d, r) in dst[y0 * w..(y0 + 1) * w].iter_mut().zip(&row) {
                *d = *d + *r * wy0;
            }
            for (d, r) in dst[y1 * w..(y1 + 1) * w].iter_mut().zip(&row) {
                *d = *d + *r * wy1;
            }
        }
    }
}

/// 2x2 stride-2 max pooling; returns the flat source index of every output.
pub(crate) fn maxpool2<T: Real>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) -> Vec<u32> {
    let (ho, wo) = (h / 2, w / 2);
    let mut arg = vec![0u32; planes * ho * wo];
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_i = base + 2 * oy * w + 2 * ox;
                let mut best = x[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    // strict '>' keeps the first maximum on ties
                    if x[i] > best {
                        best = x[i];
                        best_i = i;
                    }
                }
                let o = (p * ho + oy) * wo + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    arg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], c: usize, h: usize, w: usize, wt: &[f64], co: usize, k: usize, s: usize, p: usize) -> Vec<f64> {
        let ho = conv_out(h, k, s, p);
        let wo = conv_out(w, k, s, p);
        let mut out = vec![0.0; co * ho * wo];
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * s + ky) as isize - p as isize;
                                let ix = (ox * s + kx) as isize - p as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x[(ci * h + iy as usize) * w + ix as usize]
                                        * wt[((o * c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_gemm_matches_direct_convolution() {
        for &(h, w, k, s, p) in &[(6, 5, 3, 1, 1), (8, 8, 4, 2, 1), (7, 7, 4, 1, 1), (5, 6, 1, 1, 0)] {
            let c = 2;
            let co = 3;
            let x: Vec<f64> = (0..c * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let wt: Vec<f64> = (0..co * c * k * k).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
            let ho = conv_out(h, k, s, p);
            let wo = conv_out(w, k, s, p);
            let mut cols = vec![0.0; c * k * k * ho * wo];
            im2col(&x, c, h, w, k, s, p, &mut cols);
            let mut out = vec![0.0; co * ho * wo];
            let kk = c * k * k;
            f64::gemm(co, kk, ho * wo, 1.0, &wt, kk as isize, 1, &cols, (ho * wo) as isize, 1, 0.0, &mut out, (ho * wo) as isize, 1);
            let expect = naive_conv(&x, c, h, w, &wt, co, k, s, p);
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{h}x{w} k{k} s{s} p{p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        for &(h, w, k, s, p) in &[(6, 5, 3, 1, 1), (8, 8, 4, 2, 1), (7, 7, 4, 1, 1)] {
            let c = 2;
            let ho = conv_out(h, k, s, p);
            let wo = conv_out(w, k, s, p);
            let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
            let y: Vec<f64> = (0..c * k * k * ho * wo).map(|i| (i as f64 * 0.11).cos()).collect();
            let mut cols = vec![0.0; y.len()];
            im2col(&x, c, h, w, k, s, p, &mut cols);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let mut dx = vec![0.0; x.len()];
            col2im(&y, c, h, w, k, s, p, &mut dx);
            let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn bilinear_taps_match_half_pixel_rule() {
        let t = bilinear_taps(4);
        assert_eq!(t[0], (0, 1, 1.0, 0.0));
        assert_eq!(t[1], (0, 1, 0.75, 0.25));
        assert_eq!(t[2], (0, 1, 0.25, 0.75));
        assert_eq!(t[7], (3, 3, 0.75, 0.25));
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let x = vec![2.5f64; 2 * 3 * 4];
        let mut out = vec![0.0; 2 * 6 * 8];
        upsample2x(&x, 2, 3, 4, &mut out);
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }
}
