//! Translation-invariant lattice convolution.
//!
//! The nonlocal operator couples every pair of box nodes through weights that
//! depend only on the offset, so applying it is a discrete convolution. For
//! anything beyond toy sizes the convolution runs through zero-padded FFTs;
//! a direct summation is kept for small grids and as the validation path.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Weights `W_k` for lattice offsets `k`, stored dense over
/// `[-nx_off, nx_off] x [-ny_off, ny_off]` with `W_0 = 0`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub nx_off: usize,
    pub ny_off: usize,
    pub w: Vec<f64>,
}

impl KernelTable {
    pub fn new(nx_off: usize, ny_off: usize) -> KernelTable {
        KernelTable {
            nx_off,
            ny_off,
            w: vec![0.0; (2 * nx_off + 1) * (2 * ny_off + 1)],
        }
    }

    #[inline]
    pub fn idx(&self, kx: isize, ky: isize) -> usize {
        let row = (ky + self.ny_off as isize) as usize;
        let col = (kx + self.nx_off as isize) as usize;
        row * (2 * self.nx_off + 1) + col
    }

    #[inline]
    pub fn get(&self, kx: isize, ky: isize) -> f64 {
        self.w[self.idx(kx, ky)]
    }

    #[inline]
    pub fn add(&mut self, kx: isize, ky: isize, v: f64) {
        let i = self.idx(kx, ky);
        self.w[i] += v;
    }

    pub fn min_weight(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sum of `W_k` over the offsets that stay inside an `nx x ny` box from
    /// node `(ix, iy)`, for every node; computed through compensated prefix
    /// sums so the constant-extension identity holds to machine precision.
    pub fn in_box_sums(&self, nx: usize, ny: usize) -> Vec<f64> {
        let w_cols = 2 * self.nx_off + 1;
        let w_rows = 2 * self.ny_off + 1;
        // prefix[r][c] = sum over rows < r, cols < c
        let mut prefix = vec![0.0f64; (w_rows + 1) * (w_cols + 1)];
        for r in 0..w_rows {
            let mut row_sum = 0.0f64;
            let mut comp = 0.0f64;
            for c in 0..w_cols {
                let y = self.w[r * w_cols + c] - comp;
                let t = row_sum + y;
                comp = (t - row_sum) - y;
                row_sum = t;
                prefix[(r + 1) * (w_cols + 1) + (c + 1)] =
                    prefix[r * (w_cols + 1) + (c + 1)] + row_sum;
            }
        }
        let rect = |r0: usize, r1: usize, c0: usize, c1: usize| -> f64 {
            prefix[r1 * (w_cols + 1) + c1] - prefix[r0 * (w_cols + 1) + c1]
                - prefix[r1 * (w_cols + 1) + c0]
                + prefix[r0 * (w_cols + 1) + c0]
        };
        let mut out = vec![0.0; nx * ny];
        for iy in 0..ny {
            // offsets ky in [-iy, ny-1-iy] map to rows [ny_off - iy, ny_off + ny - iy)
            let r0 = self.ny_off - iy.min(self.ny_off);
            let r1 = (self.ny_off + ny - iy).min(w_rows);
            for ix in 0..nx {
                let c0 = self.nx_off - ix.min(self.nx_off);
                let c1 = (self.nx_off + nx - ix).min(w_cols);
                out[iy * nx + ix] = rect(r0, r1, c0, c1);
            }
        }
        out
    }
}

/// How [`Conv`] evaluates the convolution.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ConvMode {
    /// Direct summation below a size threshold, FFT above.
    Auto,
    Direct,
    Fft,
}

/// Convolution engine sized for an `nx x ny` field against a kernel table.
pub struct Conv {
    nx: usize,
    ny: usize,
    sx: usize,
    sy: usize,
    kernel_hat: Vec<Complex64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Option<Arc<dyn Fft<f64>>>,
    inv_y: Option<Arc<dyn Fft<f64>>>,
    direct: Option<KernelTable>,
}

impl Conv {
    pub fn new(kernel: &KernelTable, nx: usize, ny: usize, mode: ConvMode) -> Conv {
        let use_direct = match mode {
            ConvMode::Direct => true,
            ConvMode::Fft => false,
            ConvMode::Auto => nx * ny <= 1024,
        };
        let sx = (nx + 2 * kernel.nx_off + 1).next_power_of_two();
        let sy = if ny == 1 {
            1
        } else {
            (ny + 2 * kernel.ny_off + 1).next_power_of_two()
        };
        let mut planner = FftPlanner::<f64>::new();
        let fwd_x = planner.plan_fft_forward(sx);
        let inv_x = planner.plan_fft_inverse(sx);
        let (fwd_y, inv_y) = if sy > 1 {
            (
                Some(planner.plan_fft_forward(sy)),
                Some(planner.plan_fft_inverse(sy)),
            )
        } else {
            (None, None)
        };
        let mut conv = Conv {
            nx,
            ny,
            sx,
            sy,
            kernel_hat: Vec::new(),
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            direct: use_direct.then(|| kernel.clone()),
        };
        if !use_direct {
            // embed the kernel with wrapped negative offsets, transform once
            let mut buf = vec![Complex64::new(0.0, 0.0); conv.sx * conv.sy];
            for ky in -(kernel.ny_off as isize)..=(kernel.ny_off as isize) {
                if ny == 1 && ky != 0 {
                    continue;
                }
                let row = ky.rem_euclid(conv.sy as isize) as usize;
                for kx in -(kernel.nx_off as isize)..=(kernel.nx_off as isize) {
                    let col = kx.rem_euclid(conv.sx as isize) as usize;
                    buf[row * conv.sx + col] = Complex64::new(kernel.get(kx, ky), 0.0);
                }
            }
            conv.fft2(&mut buf, true);
            conv.kernel_hat = buf;
        }
        conv
    }

    fn fft2(&self, buf: &mut [Complex64], forward: bool) {
        let x_plan = if forward { &self.fwd_x } else { &self.inv_x };
        for row in buf.chunks_exact_mut(self.sx) {
            x_plan.process(row);
        }
        if self.sy > 1 {
            let y_plan = if forward {
                self.fwd_y.as_ref().unwrap()
            } else {
                self.inv_y.as_ref().unwrap()
            };
            let mut col = vec![Complex64::new(0.0, 0.0); self.sy];
            for c in 0..self.sx {
                for (r, v) in col.iter_mut().enumerate() {
                    *v = buf[r * self.sx + c];
                }
                y_plan.process(&mut col);
                for (r, v) in col.iter().enumerate() {
                    buf[r * self.sx + c] = *v;
                }
            }
        }
    }

    /// `out_p = sum_q W_{p-q} v_q` over box nodes.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nx * self.ny);
        if let Some(kernel) = &self.direct {
            return direct_apply(kernel, self.nx, self.ny, values);
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.sx * self.sy];
        for j in 0..self.ny {
            for i in 0..self.nx {
                buf[j * self.sx + i] = Complex64::new(values[j * self.nx + i], 0.0);
            }
        }
        self.fft2(&mut buf, true);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= *k;
        }
        self.fft2(&mut buf, false);
        let scale = 1.0 / (self.sx * self.sy) as f64;
        let mut out = vec![0.0; self.nx * self.ny];
        for j in 0..self.ny {
            for i in 0..self.nx {
                out[j * self.nx + i] = buf[j * self.sx + i].re * scale;
            }
        }
        out
    }
}

/// Reference direct summation, quadratic in the node count.
pub fn direct_apply(kernel: &KernelTable, nx: usize, ny: usize, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; nx * ny];
    for py in 0..ny {
        for px in 0..nx {
            let mut acc = 0.0;
            for qy in 0..ny {
                for qx in 0..nx {
                    let w = kernel.get(px as isize - qx as isize, py as isize - qy as isize);
                    if w != 0.0 {
                        acc += w * values[qy * nx + qx];
                    }
                }
            }
            out[py * nx + px] = acc;
        }
    }
    out
}
