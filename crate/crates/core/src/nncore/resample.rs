//! Spatial resampling as sparse linear maps over pixels.
//!
//! Adaptive average pooling and bilinear resizing both act independently on
//! each channel, so they are stored as per-output-pixel tap lists and share one
//! forward and one adjoint kernel.

use super::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Resampler {
    in_hw: (usize, usize),
    out_hw: (usize, usize),
    /// `taps[o]` lists `(input pixel, weight)` for output pixel `o`.
    taps: Vec<Vec<(usize, f64)>>,
}

impl Resampler {
    /// Averages over windows `[⌊iH/h⌋, ⌈(i+1)H/h⌉) × [⌊jW/w⌋, ⌈(j+1)W/w⌉)`.
    pub fn adaptive_avg_pool(
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<Self, NnError> {
        if out_h == 0 || out_w == 0 || out_h > in_h || out_w > in_w {
            return Err(NnError::Argument(format!(
                "pooled size {out_h}×{out_w} must be within 1..={in_h}×1..={in_w}"
            )));
        }
        let window = |i: usize, n_in: usize, n_out: usize| {
            (i * n_in / n_out, ((i + 1) * n_in).div_ceil(n_out))
        };
        let mut taps = Vec::with_capacity(out_h * out_w);
        for i in 0..out_h {
            let (r0, r1) = window(i, in_h, out_h);
            for j in 0..out_w {
                let (c0, c1) = window(j, in_w, out_w);
                let weight = 1.0 / ((r1 - r0) * (c1 - c0)) as f64;
                let mut cell = Vec::with_capacity((r1 - r0) * (c1 - c0));
                for r in r0..r1 {
                    for c in c0..c1 {
                        cell.push((r * in_w + c, weight));
                    }
                }
                taps.push(cell);
            }
        }
        Ok(Self {
            in_hw: (in_h, in_w),
            out_hw: (out_h, out_w),
            taps,
        })
    }

    /// Bilinear resize with half-pixel (align-corners = false) sample positions
    /// `src = (dst + ½)·in/out − ½`, clamped to the valid range.
    pub fn bilinear(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Result<Self, NnError> {
        if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
            return Err(NnError::Argument(
                "bilinear resize needs non-empty maps".into(),
            ));
        }
        let axis = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
            let src = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                .clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        };
        let mut taps = Vec::with_capacity(out_h * out_w);
        for i in 0..out_h {
            let (r0, r1, fr) = axis(i, in_h, out_h);
            for j in 0..out_w {
                let (c0, c1, fc) = axis(j, in_w, out_w);
                let mut cell: Vec<(usize, f64)> = Vec::with_capacity(4);
                for (r, wr) in [(r0, 1.0 - fr), (r1, fr)] {
                    for (c, wc) in [(c0, 1.0 - fc), (c1, fc)] {
                        let w = wr * wc;
                        if w == 0.0 {
                            continue;
                        }
                        let idx = r * in_w + c;
                        match cell.iter_mut().find(|(k, _)| *k == idx) {
                            Some(slot) => slot.1 += w,
                            None => cell.push((idx, w)),
                        }
                    }
                }
                taps.push(cell);
            }
        }
        Ok(Self {
            in_hw: (in_h, in_w),
            out_hw: (out_h, out_w),
            taps,
        })
    }

    pub fn in_hw(&self) -> (usize, usize) {
        self.in_hw
    }

    pub fn out_hw(&self) -> (usize, usize) {
        self.out_hw
    }

    /// Applies the map to an `H × W × C` tensor.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (h, w, c) = x.dims3()?;
        if (h, w) != self.in_hw {
            return Err(NnError::Shape(format!(
                "resampler expects {:?}, got {h}×{w}",
                self.in_hw
            )));
        }
        let src = x.data();
        let mut out = vec![0.0; self.taps.len() * c];
        for (o, cell) in self.taps.iter().enumerate() {
            let dst = &mut out[o * c..(o + 1) * c];
            for &(i, wgt) in cell {
                for (d, s) in dst.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                    *d += wgt * s;
                }
            }
        }
        Tensor::new([self.out_hw.0, self.out_hw.1, c], out)
    }

    /// Adjoint map: scatters output gradients back to input pixels.
    pub fn apply_adjoint(&self, grad_out: &Tensor) -> Tensor {
        let c = grad_out.shape()[2];
        let g = grad_out.data();
        let mut out = vec![0.0; self.in_hw.0 * self.in_hw.1 * c];
        for (o, cell) in self.taps.iter().enumerate() {
            for &(i, wgt) in cell {
                for (d, s) in out[i * c..(i + 1) * c]
                    .iter_mut()
                    .zip(&g[o * c..(o + 1) * c])
                {
                    *d += wgt * s;
                }
            }
        }
        Tensor::new([self.in_hw.0, self.in_hw.1, c], out).expect("adjoint shape")
    }
}
