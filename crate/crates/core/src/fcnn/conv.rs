//! Same-size, stride-1, zero-padded 2-D convolution on `[channel][row][col]`
//! buffers, lowered to GEMM through an explicit column matrix.

/// Geometry of one convolution applied to an `h × w` field.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    #[inline]
    pub fn taps(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// `c[m×n] = alpha·a[m×k]·b[k×n] + beta·c`, all row-major unless the
/// transpose flags say otherwise.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides describe exactly the buffers checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Builds the `(in_ch·kh·kw) × (h·w)` column matrix of `input`.
pub(crate) fn im2col(s: &ConvShape, input: &[f64], col: &mut [f64]) {
    let (h, w) = (s.h, s.w);
    let p = s.pixels();
    debug_assert_eq!(input.len(), s.in_ch * p);
    debug_assert_eq!(col.len(), s.taps() * p);
    for c in 0..s.in_ch {
        let plane = &input[c * p..(c + 1) * p];
        for di in 0..s.kh {
            for dj in 0..s.kw {
                let row = (c * s.kh + di) * s.kw + dj;
                let dst = &mut col[row * p..(row + 1) * p];
                let oj = dj as isize - s.pad_w as isize;
                let j_lo = (-oj).max(0) as usize;
                let j_hi = (w as isize - oj).min(w as isize).max(0) as usize;
                for i in 0..h {
                    let si = i as isize + di as isize - s.pad_h as isize;
                    let out = &mut dst[i * w..(i + 1) * w];
                    if si < 0 || si >= h as isize || j_lo >= j_hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    out[..j_lo].fill(0.0);
                    let s0 = (j_lo as isize + oj) as usize;
                    out[j_lo..j_hi].copy_from_slice(&src[s0..s0 + (j_hi - j_lo)]);
                    out[j_hi..].fill(0.0);
                }
            }
        }
    }
}

/// Scatters a column-matrix gradient back onto the input (adjoint of
/// [`im2col`]); `grad_input` is overwritten.
pub(crate) fn col2im(s: &ConvShape, col: &[f64], grad_input: &mut [f64]) {
    let (h, w) = (s.h, s.w);
    let p = s.pixels();
    grad_input.fill(0.0);
    for c in 0..s.in_ch {
        let plane = &mut grad_input[c * p..(c + 1) * p];
        for di in 0..s.kh {
            for dj in 0..s.kw {
                let row = (c * s.kh + di) * s.kw + dj;
                let src = &col[row * p..(row + 1) * p];
                let oj = dj as isize - s.pad_w as isize;
                let j_lo = (-oj).max(0) as usize;
                let j_hi = (w as isize - oj).min(w as isize).max(0) as usize;
                if j_lo >= j_hi {
                    continue;
                }
                for i in 0..h {
                    let si = i as isize + di as isize - s.pad_h as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let s0 = (j_lo as isize + oj) as usize;
                    let dst = &mut plane[si as usize * w + s0..si as usize * w + s0 + (j_hi - j_lo)];
                    for (d, v) in dst.iter_mut().zip(&src[i * w + j_lo..i * w + j_hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// `out = weights · im2col(input) + bias`.
pub(crate) fn forward(s: &ConvShape, weights: &[f64], bias: &[f64], input: &[f64], col: &mut Vec<f64>) -> Vec<f64> {
    let p = s.pixels();
    col.resize(s.taps() * p, 0.0);
    im2col(s, input, col);
    let mut out = vec![0.0; s.out_ch * p];
    for (o, b) in bias.iter().enumerate() {
        out[o * p..(o + 1) * p].fill(*b);
    }
    gemm(s.out_ch, s.taps(), p, weights, false, col, false, &mut out, 1.0);
    out
}

/// Accumulates weight and bias gradients and optionally returns the input
/// gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    s: &ConvShape,
    weights: &[f64],
    input: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
    col: &mut Vec<f64>,
) -> Option<Vec<f64>> {
    let p = s.pixels();
    let k = s.taps();
    col.resize(k * p, 0.0);
    im2col(s, input, col);
    gemm(s.out_ch, p, k, grad_out, false, col, true, grad_w, 1.0);
    for (o, gb) in grad_b.iter_mut().enumerate() {
        *gb += grad_out[o * p..(o + 1) * p].iter().sum::<f64>();
    }
    want_input.then(|| input_backward(s, weights, grad_out, col))
}

/// Gradient with respect to the layer input only.
pub(crate) fn input_backward(s: &ConvShape, weights: &[f64], grad_out: &[f64], col: &mut Vec<f64>) -> Vec<f64> {
    let p = s.pixels();
    let k = s.taps();
    col.resize(k * p, 0.0);
    gemm(k, s.out_ch, p, weights, true, grad_out, false, col, 0.0);
    let mut grad_in = vec![0.0; s.in_ch * p];
    col2im(s, col, &mut grad_in);
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn naive(s: &ConvShape, weights: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; s.out_ch * s.pixels()];
        for o in 0..s.out_ch {
            for i in 0..s.h {
                for j in 0..s.w {
                    let mut acc = bias[o];
                    for c in 0..s.in_ch {
                        for di in 0..s.kh {
                            for dj in 0..s.kw {
                                let si = i as isize + di as isize - s.pad_h as isize;
                                let sj = j as isize + dj as isize - s.pad_w as isize;
                                if si < 0 || sj < 0 || si >= s.h as isize || sj >= s.w as isize {
                                    continue;
                                }
                                acc += weights[((o * s.in_ch + c) * s.kh + di) * s.kw + dj]
                                    * input[(c * s.h + si as usize) * s.w + sj as usize];
                            }
                        }
                    }
                    out[(o * s.h + i) * s.w + j] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, salt: u64) -> Vec<f64> {
        (0..n).map(|i| (((i as u64 * 2654435761 + salt * 97) % 1000) as f64 / 500.0) - 1.0).collect()
    }

    #[test]
    fn gemm_lowering_matches_naive() {
        for (kh, pad, h, w) in [(3, 1, 5, 7), (5, 2, 6, 6), (3, 1, 1, 4), (5, 2, 3, 2)] {
            let s = ConvShape { in_ch: 3, out_ch: 4, kh, kw: kh, pad_h: pad, pad_w: pad, h, w };
            let wts = pseudo(s.out_ch * s.taps(), 1);
            let bias = pseudo(s.out_ch, 2);
            let input = pseudo(s.in_ch * s.pixels(), 3);
            let fast = forward(&s, &wts, &bias, &input, &mut Vec::new());
            let slow = naive(&s, &wts, &bias, &input);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let s = ConvShape { in_ch: 2, out_ch: 1, kh: 3, kw: 3, pad_h: 1, pad_w: 1, h: 4, w: 5 };
        let x = pseudo(s.in_ch * s.pixels(), 4);
        let u = pseudo(s.taps() * s.pixels(), 5);
        let mut col = vec![0.0; u.len()];
        im2col(&s, &x, &mut col);
        let lhs: f64 = col.iter().zip(&u).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&s, &u, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
