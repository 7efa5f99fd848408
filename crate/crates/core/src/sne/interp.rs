//! Repulsive sums by polynomial interpolation onto a regular grid and FFT
//! convolution with the squared Cauchy kernel.
//!
//! With `K(d) = (1 + d^2)^-2` and grid potentials `S0` (charge 1) and `S1`
//! (charge `y`), the force on `i` is `sum_j w_ij^2 (y_i - y_j) = y_i S0 - S1`.
//! Since `sum_j w_ij = sum_j K(d_ij) (1 + d_ij^2)` and the interpolated kernel
//! is symmetric, the total `Z = sum_i ((1 + 2 |y_i|^2) S0 - 2 y_i . S1 - 1)`
//! needs no `|y|^2` potential.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Interpolation nodes per box along each axis.
const NODES: usize = 3;
const MIN_BOXES: usize = 64;
const MAX_BOXES: usize = 256;
/// Box widths are rounded up to a power of `2^(1/LADDER)` so the kernel
/// transform can be reused while the layout's extent drifts.
const LADDER: f64 = 16.0;

/// Smallest `2^a 3^b` at least `target` within the box bounds, so the FFT
/// length `6 * boxes` factors into small radices.
fn box_count(range: f64) -> usize {
    let target = (range.ceil() as usize).clamp(MIN_BOXES, MAX_BOXES);
    let mut best = usize::MAX;
    let mut p2 = 1;
    while p2 < 2 * MAX_BOXES {
        let mut v = p2;
        while v < target {
            v *= 3;
        }
        best = best.min(v);
        p2 *= 2;
    }
    best
}

/// Lagrange weights of the box-local coordinate `u` in `[0, 1]` for nodes at
/// `(k + 0.5) / NODES`.
#[inline]
fn lagrange(u: f64) -> [f64; NODES] {
    let t = |k: usize| (k as f64 + 0.5) / NODES as f64;
    let mut w = [1.0; NODES];
    for (k, wk) in w.iter_mut().enumerate() {
        for m in 0..NODES {
            if m != k {
                *wk *= (u - t(m)) / (t(k) - t(m));
            }
        }
    }
    w
}

/// `dst[c * rows + r] = src[r * cols + c]` for the first `rows` rows of a
/// `cols`-wide source; `dst` rows are `stride` long.
fn transpose_into<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut [T], stride: usize) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * stride + r] = src[r * cols + c];
                }
            }
        }
    }
}

struct Plans {
    len: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Reusable plans, kernel transform and grids for [`Interpolator::repulsion`].
pub(crate) struct Interpolator {
    real_planner: RealFftPlanner<f64>,
    planner: FftPlanner<f64>,
    plans: Option<Plans>,
    /// Grid size, node spacing bits and the transformed kernel.
    kernel: Option<(usize, u64, Vec<f64>)>,
    row: Vec<f64>,
    spec: Vec<Complex<f64>>,
    cols: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Interpolator {
    pub fn new() -> Self {
        Interpolator {
            real_planner: RealFftPlanner::new(),
            planner: FftPlanner::new(),
            plans: None,
            kernel: None,
            row: Vec::new(),
            spec: Vec::new(),
            cols: Vec::new(),
            scratch: Vec::new(),
        }
    }

    fn prepare(&mut self, m: usize) {
        if self.plans.as_ref().is_some_and(|p| p.len == m) {
            return;
        }
        let plans = Plans {
            len: m,
            r2c: self.real_planner.plan_fft_forward(m),
            c2r: self.real_planner.plan_fft_inverse(m),
            forward: self.planner.plan_fft_forward(m),
            inverse: self.planner.plan_fft_inverse(m),
        };
        let scratch = [
            plans.r2c.get_scratch_len(),
            plans.c2r.get_scratch_len(),
            plans.forward.get_inplace_scratch_len(),
            plans.inverse.get_inplace_scratch_len(),
        ];
        self.scratch.resize(scratch.into_iter().max().unwrap(), Complex::default());
        let h = m / 2 + 1;
        self.row.resize(m, 0.0);
        self.spec.resize(m * h, Complex::default());
        self.cols.resize(h * m, Complex::default());
        self.plans = Some(plans);
    }

    /// 2D transform of the `rows x m` real block at the top of an `m x m`
    /// zero-padded grid, left in `cols` as `m / 2 + 1` rows of length `m`
    /// (transposed).
    fn forward(&mut self, values: &[f64], rows: usize, width: usize) {
        let plans = self.plans.as_ref().unwrap();
        let m = plans.len;
        let h = m / 2 + 1;
        for r in 0..rows {
            self.row[..width].copy_from_slice(&values[r * width..(r + 1) * width]);
            self.row[width..].fill(0.0);
            plans
                .r2c
                .process_with_scratch(&mut self.row, &mut self.spec[r * h..(r + 1) * h], &mut self.scratch)
                .expect("buffer lengths match the plan");
        }
        transpose_into(&self.spec, rows, h, &mut self.cols, m);
        for c in self.cols.chunks_exact_mut(m) {
            c[rows..].fill(Complex::default());
        }
        plans.forward.process_with_scratch(&mut self.cols, &mut self.scratch);
    }

    /// Kernel transform on the circulant embedding, scaled by the inverse
    /// transforms' normalization. The kernel is real and even, so its
    /// transform is real.
    fn kernel(&mut self, grid: usize, spacing: f64) {
        if matches!(&self.kernel, Some((g, s, _)) if *g == grid && *s == spacing.to_bits()) {
            return;
        }
        let m = 2 * grid;
        let sq: Vec<f64> = (0..m)
            .map(|u| {
                let d = if u <= grid { u } else { m - u } as f64 * spacing;
                d * d
            })
            .collect();
        let mut k = vec![0.0; m * m];
        for (u, du2) in sq.iter().enumerate() {
            for (v, dv2) in sq.iter().enumerate() {
                let w = 1.0 / (1.0 + du2 + dv2);
                k[u * m + v] = w * w;
            }
        }
        self.forward(&k, m, m);
        let norm = 1.0 / (m * m) as f64;
        self.kernel = Some((grid, spacing.to_bits(), self.cols.iter().map(|c| c.re * norm).collect()));
    }

    /// Convolves the `grid x grid` charges with the kernel, in place.
    fn convolve(&mut self, charges: &mut [f64], grid: usize) {
        self.forward(charges, grid, grid);
        let plans = self.plans.as_ref().unwrap();
        let m = plans.len;
        let h = m / 2 + 1;
        for (x, k) in self.cols.iter_mut().zip(&self.kernel.as_ref().unwrap().2) {
            *x *= *k;
        }
        plans.inverse.process_with_scratch(&mut self.cols, &mut self.scratch);
        // Only the first `grid` rows of the result are read.
        for c in 0..h {
            for r in 0..grid {
                self.spec[r * h + c] = self.cols[c * m + r];
            }
        }
        for r in 0..grid {
            let spec = &mut self.spec[r * h..(r + 1) * h];
            // Imaginary parts here are rounding noise of a real signal.
            spec[0].im = 0.0;
            spec[h - 1].im = 0.0;
            plans
                .c2r
                .process_with_scratch(spec, &mut self.row, &mut self.scratch)
                .expect("buffer lengths match the plan");
            charges[r * grid..(r + 1) * grid].copy_from_slice(&self.row[..grid]);
        }
    }

    /// Forces `sum_j w_ij^2 (y_i - y_j)` per point and the total
    /// `Z = sum_{i != j} w_ij`.
    pub fn repulsion(&mut self, points: &[[f64; 2]]) -> (Vec<[f64; 2]>, f64) {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let range = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let boxes = box_count(range);
        let h = 2f64.powf((LADDER * (range / boxes as f64).log2()).ceil() / LADDER) * (1.0 + 1e-12);
        let grid = boxes * NODES;
        self.prepare(2 * grid);
        self.kernel(grid, h / NODES as f64);

        let stencil: Vec<(usize, [[f64; NODES]; 2])> = points
            .iter()
            .map(|p| {
                let mut b = [0usize; 2];
                let mut w = [[0.0; NODES]; 2];
                for a in 0..2 {
                    let s = (p[a] - lo[a]) / h;
                    let bi = (s.floor() as usize).min(boxes - 1);
                    b[a] = bi;
                    w[a] = lagrange(s - bi as f64);
                }
                (b[0] * NODES * grid + b[1] * NODES, w)
            })
            .collect();

        let mut pot = [vec![0.0; grid * grid], vec![0.0; grid * grid], vec![0.0; grid * grid]];
        for (p, (base, w)) in points.iter().zip(&stencil) {
            for (k, wx) in w[0].iter().enumerate() {
                for (l, wy) in w[1].iter().enumerate() {
                    let at = base + k * grid + l;
                    let f = wx * wy;
                    pot[0][at] += f;
                    pot[1][at] += f * p[0];
                    pot[2][at] += f * p[1];
                }
            }
        }
        for q in &mut pot {
            self.convolve(q, grid);
        }

        let mut z = 0.0;
        let forces = points
            .iter()
            .zip(&stencil)
            .map(|(p, (base, w))| {
                let mut s = [0.0; 3];
                for (k, wx) in w[0].iter().enumerate() {
                    for (l, wy) in w[1].iter().enumerate() {
                        let at = base + k * grid + l;
                        let f = wx * wy;
                        for (sc, q) in s.iter_mut().zip(&pot) {
                            *sc += f * q[at];
                        }
                    }
                }
                let r2 = p[0] * p[0] + p[1] * p[1];
                // The self term contributes exactly 1 to the kernel sum.
                z += (1.0 + 2.0 * r2) * s[0] - 2.0 * (p[0] * s[1] + p[1] * s[2]) - 1.0;
                [p[0] * s[0] - s[1], p[1] * s[0] - s[2]]
            })
            .collect();
        (forces, z)
    }
}
