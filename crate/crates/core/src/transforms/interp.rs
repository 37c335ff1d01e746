//! Sampling helpers shared by the resampling transforms.

use crate::volume::Shape;

/// One-dimensional linear sampling tap: `(1 - w) * x[lo] + w * x[hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w: f32,
}

impl Tap {
    /// Tap at continuous coordinate `x`, clamped to `[0, n - 1]`.
    #[inline]
    pub fn clamped(x: f64, n: usize) -> Tap {
        let max = (n - 1) as f64;
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max) };
        let lo = x as usize;
        let hi = (lo + 1).min(n - 1);
        Tap {
            lo,
            hi,
            w: (x - lo as f64) as f32,
        }
    }
}

/// Half-pixel-centre mapping from `n_out` samples onto `n_in`:
/// output `x` reads input `(x + 0.5) * n_in / n_out - 0.5`, edge-clamped.
pub(crate) fn resize_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|x| Tap::clamped((x as f64 + 0.5) * scale - 0.5, n_in))
        .collect()
}

/// Nearest source index under the same half-pixel-centre mapping.
pub(crate) fn nearest_index(x: usize, n_in: usize, n_out: usize) -> usize {
    let src = ((x as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize;
    src.min(n_in - 1)
}

/// Trilinear sample of all channels at `(tf, th, tw)` into `out`.
#[inline]
pub(crate) fn trilinear(src: &[f32], shape: Shape, tf: Tap, th: Tap, tw: Tap, out: &mut [f32]) {
    match shape.channels {
        1 => trilinear_n::<1>(src, shape, tf, th, tw, out),
        3 => trilinear_n::<3>(src, shape, tf, th, tw, out),
        c => unreachable!("volumes have 1 or 3 channels, got {c}"),
    }
}

#[inline(always)]
fn trilinear_n<const C: usize>(src: &[f32], shape: Shape, tf: Tap, th: Tap, tw: Tap, out: &mut [f32]) {
    let sh = shape.width * C;
    let sf = shape.height * sh;
    let (f0, f1) = (tf.lo * sf, tf.hi * sf);
    let (h0, h1) = (th.lo * sh, th.hi * sh);
    let (w0, w1) = (tw.lo * C, tw.hi * C);
    let (a, b, c) = (tf.w, th.w, tw.w);
    let corners = [
        (f0 + h0 + w0, (1.0 - a) * (1.0 - b) * (1.0 - c)),
        (f0 + h0 + w1, (1.0 - a) * (1.0 - b) * c),
        (f0 + h1 + w0, (1.0 - a) * b * (1.0 - c)),
        (f0 + h1 + w1, (1.0 - a) * b * c),
        (f1 + h0 + w0, a * (1.0 - b) * (1.0 - c)),
        (f1 + h0 + w1, a * (1.0 - b) * c),
        (f1 + h1 + w0, a * b * (1.0 - c)),
        (f1 + h1 + w1, a * b * c),
    ];
    let mut acc = [0.0f32; C];
    for (o, weight) in corners {
        let px = &src[o..o + C];
        for k in 0..C {
            acc[k] += weight * px[k];
        }
    }
    out[..C].copy_from_slice(&acc);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_taps_are_exact() {
        for (i, t) in resize_taps(7, 7).iter().enumerate() {
            assert_eq!((t.lo, t.w), (i, 0.0));
        }
        for x in 0..7 {
            assert_eq!(nearest_index(x, 7, 7), x);
        }
    }

    #[test]
    fn clamped_tap_edges() {
        assert_eq!(Tap::clamped(-3.0, 4), Tap { lo: 0, hi: 1, w: 0.0 });
        assert_eq!(Tap::clamped(9.0, 4), Tap { lo: 3, hi: 3, w: 0.0 });
        assert_eq!(Tap::clamped(0.25, 1), Tap { lo: 0, hi: 0, w: 0.0 });
    }
}
