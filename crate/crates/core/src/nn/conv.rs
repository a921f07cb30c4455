use crate::autodiff::{dot, Operation, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Output length of a same-padded window op: `ceil(len / stride)`.
pub fn same_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Left padding for a same-padded window op. Odd kernels at stride 1 pad
/// symmetrically; any remainder goes on the right.
pub fn same_pad_left(len: usize, kernel: usize, stride: usize) -> usize {
    let out = same_out_len(len, stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    total / 2
}

/// Output positions `t` for which `t * stride + offset` lands inside `[0, len)`,
/// where `offset = k - pad_left` may be negative.
#[inline]
pub(crate) fn valid_range(out_len: usize, len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let lo = if offset >= 0 {
        0
    } else {
        ((-offset) as usize).div_ceil(stride)
    };
    let last = len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub out_len: usize,
}

impl ConvGeometry {
    pub fn new(x_shape: (usize, usize, usize), w_shape: (usize, usize, usize), stride: usize) -> Result<Self> {
        let (batch, c_in, len) = x_shape;
        let (c_out, w_in, kernel) = w_shape;
        if w_in != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: vec![batch, c_in, len],
                right: vec![c_out, w_in, kernel],
            });
        }
        if stride == 0 {
            return Err(Error::invalid("conv1d stride must be >= 1"));
        }
        Ok(ConvGeometry {
            batch,
            c_in,
            c_out,
            len,
            kernel,
            stride,
            pad_left: same_pad_left(len, kernel, stride),
            out_len: same_out_len(len, stride),
        })
    }

    #[inline]
    fn range(&self, k: usize) -> (usize, usize) {
        valid_range(self.out_len, self.len, self.stride, k as isize - self.pad_left as isize)
    }

    /// Phase and shift of tap `k`: input index `t * stride + k - pad_left`
    /// is element `t + shift` of phase row `phase`.
    #[inline]
    fn tap(&self, k: usize) -> (usize, isize) {
        let o = k as isize - self.pad_left as isize;
        let s = self.stride as isize;
        (o.rem_euclid(s) as usize, o.div_euclid(s))
    }

    fn phase_len(&self) -> usize {
        self.len.div_ceil(self.stride)
    }

    /// Forward taps over an output row, reading the phased input row.
    fn input_spans(&self) -> Vec<Span> {
        let plen = self.phase_len() as isize;
        (0..self.kernel)
            .map(|k| {
                let (t0, t1) = self.range(k);
                let (r, q) = self.tap(k);
                Span {
                    lo: t0,
                    hi: t1.max(t0),
                    shift: r as isize * plen + q,
                }
            })
            .collect()
    }

    /// Transposed taps over a phased input-gradient row, reading the output
    /// gradient, grouped by phase. Each group lists its kernel indices.
    fn grad_spans(&self) -> Vec<(Vec<usize>, Vec<Span>)> {
        let plen = self.phase_len() as isize;
        let mut groups: Vec<(Vec<usize>, Vec<Span>)> = vec![(Vec::new(), Vec::new()); self.stride];
        for k in 0..self.kernel {
            let (t0, t1) = self.range(k);
            if t0 >= t1 {
                continue;
            }
            let (r, q) = self.tap(k);
            let s0 = r as isize * plen + t0 as isize + q;
            groups[r].0.push(k);
            groups[r].1.push(Span {
                lo: s0 as usize,
                hi: s0 as usize + (t1 - t0),
                shift: t0 as isize - s0,
            });
        }
        groups.retain(|(ks, _)| !ks.is_empty());
        groups
    }
}

/// Splits every row of `x` into `stride` phase rows, `x[r], x[r + s], ...`,
/// so strided taps read contiguous memory. Rows keep their order; each takes
/// `stride * phase_len` slots.
fn to_phases(x: &[f64], len: usize, stride: usize) -> Vec<f64> {
    let plen = len.div_ceil(stride);
    let rows = x.len() / len;
    let mut out = vec![0.0; rows * stride * plen];
    for (row, dst) in x.chunks_exact(len).zip(out.chunks_exact_mut(stride * plen)) {
        for (i, &v) in row.iter().enumerate() {
            dst[(i % stride) * plen + i / stride] = v;
        }
    }
    out
}

fn from_phases(ph: &[f64], len: usize, stride: usize) -> Vec<f64> {
    let plen = len.div_ceil(stride);
    let mut out = vec![0.0; ph.len() / (stride * plen) * len];
    for (src, row) in ph.chunks_exact(stride * plen).zip(out.chunks_exact_mut(len)) {
        for (i, v) in row.iter_mut().enumerate() {
            *v = src[(i % stride) * plen + i / stride];
        }
    }
    out
}

/// One kernel tap as a shifted range: `dst[d] += w * src[d + shift]` for `d` in `lo..hi`.
#[derive(Clone, Copy, Debug)]
struct Span {
    lo: usize,
    hi: usize,
    shift: isize,
}

const TILE: usize = 8;

/// Applies every span with its weight. Elements covered by all spans are
/// accumulated in register tiles; per element the taps are still added in
/// span order, so the result equals running one axpy per span.
#[inline(always)]
fn accumulate_spans(dst: &mut [f64], src: &[f64], w: &[f64], spans: &[Span]) {
    let lo = spans.iter().map(|s| s.lo).max().unwrap_or(0);
    let hi = spans.iter().map(|s| s.hi).min().unwrap_or(0);
    if lo >= hi {
        for (&wk, s) in w.iter().zip(spans) {
            if s.lo < s.hi {
                let a = (s.lo as isize + s.shift) as usize;
                axpy_plain(wk, &src[a..a + (s.hi - s.lo)], &mut dst[s.lo..s.hi]);
            }
        }
        return;
    }
    for (&wk, s) in w.iter().zip(spans) {
        if s.lo < lo {
            let a = (s.lo as isize + s.shift) as usize;
            axpy_plain(wk, &src[a..a + (lo - s.lo)], &mut dst[s.lo..lo]);
        }
    }
    let mut d = lo;
    while d + TILE <= hi {
        let mut acc = [0.0; TILE];
        acc.copy_from_slice(&dst[d..d + TILE]);
        for (&wk, s) in w.iter().zip(spans) {
            let a = (d as isize + s.shift) as usize;
            let xs = &src[a..a + TILE];
            for j in 0..TILE {
                acc[j] += wk * xs[j];
            }
        }
        dst[d..d + TILE].copy_from_slice(&acc);
        d += TILE;
    }
    for (&wk, s) in w.iter().zip(spans) {
        if d < hi {
            let a = (d as isize + s.shift) as usize;
            axpy_plain(wk, &src[a..a + (hi - d)], &mut dst[d..hi]);
        }
    }
    for (&wk, s) in w.iter().zip(spans) {
        if s.hi > hi {
            let a = (hi as isize + s.shift) as usize;
            axpy_plain(wk, &src[a..a + (s.hi - hi)], &mut dst[hi..s.hi]);
        }
    }
}

#[inline(always)]
fn axpy_plain(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn accumulate_spans_avx(dst: &mut [f64], src: &[f64], w: &[f64], spans: &[Span]) {
    accumulate_spans(dst, src, w, spans)
}

fn apply_spans(dst: &mut [f64], src: &[f64], w: &[f64], spans: &[Span]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the CPU supports AVX, checked above.
        return unsafe { accumulate_spans_avx(dst, src, w, spans) };
    }
    accumulate_spans(dst, src, w, spans)
}

/// Same-zero-padded cross-correlation of `x[B, Cin, L]` with `w[Cout, Cin, K]`.
pub fn conv1d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeometry) -> Vec<f64> {
    let phased;
    let (xs, rlen) = if g.stride == 1 {
        (x, g.len)
    } else {
        phased = to_phases(x, g.len, g.stride);
        (&phased[..], g.stride * g.phase_len())
    };
    let spans = g.input_spans();
    let mut out = vec![0.0; g.batch * g.c_out * g.out_len];
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let orow = &mut out[(b * g.c_out + co) * g.out_len..][..g.out_len];
            if let Some(bias) = bias {
                orow.fill(bias[co]);
            }
            for ci in 0..g.c_in {
                let xrow = &xs[(b * g.c_in + ci) * rlen..][..rlen];
                let wrow = &w[(co * g.c_in + ci) * g.kernel..][..g.kernel];
                apply_spans(orow, xrow, wrow, &spans);
            }
        }
    }
    out
}

#[derive(Debug)]
struct Conv1dOp {
    geom: ConvGeometry,
    has_bias: bool,
}

impl Operation for Conv1dOp {
    fn name(&self) -> &'static str {
        "conv1d"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let g = &self.geom;
        let (x, w, dy) = (inputs[0].data(), inputs[1].data(), grad.data());
        let plen = g.phase_len();
        let rlen = g.stride * plen;
        let taps: Vec<_> = (0..g.kernel).map(|k| (g.range(k), g.tap(k))).collect();
        let start = |t0: usize, (r, q): (usize, isize)| ((r * plen) as isize + t0 as isize + q) as usize;

        let dx = needs[0].then(|| {
            // taps grouped by input phase; each group writes one phase row
            let groups = g.grad_spans();
            let mut wbuf = vec![0.0; g.kernel];
            let mut dx = vec![0.0; g.batch * g.c_in * rlen];
            for b in 0..g.batch {
                for co in 0..g.c_out {
                    let dyrow = &dy[(b * g.c_out + co) * g.out_len..][..g.out_len];
                    for ci in 0..g.c_in {
                        let dxrow = &mut dx[(b * g.c_in + ci) * rlen..][..rlen];
                        let wrow = &w[(co * g.c_in + ci) * g.kernel..][..g.kernel];
                        for (ks, spans) in &groups {
                            for (dst, &k) in wbuf.iter_mut().zip(ks) {
                                *dst = wrow[k];
                            }
                            apply_spans(dxrow, dyrow, &wbuf[..ks.len()], spans);
                        }
                    }
                }
            }
            let dx = if g.stride == 1 { dx } else { from_phases(&dx, g.len, g.stride) };
            Tensor::from_parts_unchecked(inputs[0].shape().to_vec(), dx)
        });

        let dw = needs[1].then(|| {
            let phased;
            let xs = if g.stride == 1 {
                x
            } else {
                phased = to_phases(x, g.len, g.stride);
                &phased[..]
            };
            let mut dw = vec![0.0; w.len()];
            for b in 0..g.batch {
                for co in 0..g.c_out {
                    let dyrow = &dy[(b * g.c_out + co) * g.out_len..][..g.out_len];
                    for ci in 0..g.c_in {
                        let xrow = &xs[(b * g.c_in + ci) * rlen..][..rlen];
                        let dwrow = &mut dw[(co * g.c_in + ci) * g.kernel..][..g.kernel];
                        for (dwk, &((t0, t1), tap)) in dwrow.iter_mut().zip(&taps) {
                            if t0 < t1 {
                                let s0 = start(t0, tap);
                                *dwk += dot(&dyrow[t0..t1], &xrow[s0..s0 + (t1 - t0)]);
                            }
                        }
                    }
                }
            }
            Tensor::from_parts_unchecked(inputs[1].shape().to_vec(), dw)
        });

        let mut out = vec![dx, dw];
        if self.has_bias {
            let db = needs[2].then(|| {
                let mut db = vec![0.0; g.c_out];
                for b in 0..g.batch {
                    for (co, d) in db.iter_mut().enumerate() {
                        *d += dy[(b * g.c_out + co) * g.out_len..][..g.out_len].iter().sum::<f64>();
                    }
                }
                Tensor::from_parts_unchecked(vec![g.c_out], db)
            });
            out.push(db);
        }
        Ok(out)
    }
}

/// Records a same-zero-padded 1D cross-correlation.
///
/// `x: [B, Cin, L]`, `w: [Cout, Cin, K]`, optional `bias: [Cout]`;
/// output `[B, Cout, ceil(L / stride)]`.
pub fn conv1d(tape: &mut Tape, x: Var, w: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
    tape.check(x)?;
    tape.check(w)?;
    let geom = ConvGeometry::new(tape.value(x).dims3()?, tape.value(w).dims3()?, stride)?;
    if let Some(b) = bias {
        tape.check(b)?;
        if tape.shape(b) != [geom.c_out] {
            return Err(Error::ShapeMismatch {
                op: "conv1d bias",
                left: vec![geom.c_out],
                right: tape.shape(b).to_vec(),
            });
        }
    }
    let out = conv1d_forward(
        tape.value(x).data(),
        tape.value(w).data(),
        bias.map(|b| tape.value(b).data()),
        &geom,
    );
    let out = Tensor::from_parts_unchecked(vec![geom.batch, geom.c_out, geom.out_len], out);
    let op = Box::new(Conv1dOp {
        geom,
        has_bias: bias.is_some(),
    });
    match bias {
        Some(b) => tape.record(op, &[x, w, b], out),
        None => tape.record(op, &[x, w], out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_kernel_example() {
        let mut t = Tape::new();
        let x = t.build_tensor(&[1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0], false).unwrap();
        let w = t.build_tensor(&[1, 1, 3], vec![1.0, 0.0, -1.0], false).unwrap();
        let y = conv1d(&mut t, x, w, None, 1).unwrap();
        assert_eq!(t.value(y).data(), &[-2.0, -2.0, -2.0, -2.0, 4.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        for len in [1, 2, 7, 31] {
            let vals: Vec<f64> = (0..len).map(|i| (i as f64).sin()).collect();
            let mut t = Tape::new();
            let x = t.build_tensor(&[1, 1, len], vals.clone(), false).unwrap();
            let w = t.build_tensor(&[1, 1, 1], vec![1.0], false).unwrap();
            let y = conv1d(&mut t, x, w, None, 1).unwrap();
            assert_eq!(t.value(y).data(), &vals[..]);
        }
    }

    #[test]
    fn stride_two_halves_length() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 2, 1000]).unwrap());
        let w = t.constant(Tensor::zeros(&[3, 2, 39]).unwrap());
        let y = conv1d(&mut t, x, w, None, 2).unwrap();
        assert_eq!(t.shape(y), &[1, 3, 500]);
    }

    #[test]
    fn channel_mismatch_is_error() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 2, 10]).unwrap());
        let w = t.constant(Tensor::zeros(&[3, 4, 3]).unwrap());
        assert!(matches!(conv1d(&mut t, x, w, None, 1), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn shape_law() {
        for len in 1..40 {
            for stride in [1, 2] {
                for kernel in [1, 2, 3, 9, 10, 39, 40] {
                    let pl = same_pad_left(len, kernel, stride);
                    assert!(pl < kernel.max(1));
                    assert_eq!(same_out_len(len, stride), len.div_ceil(stride));
                }
            }
        }
    }
}
