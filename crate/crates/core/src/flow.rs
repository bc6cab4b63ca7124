//! Dense optical flow between a fixed reference frame and target frames.
//!
//! Coarse-to-fine Horn–Schunck: each pyramid level warps the target towards
//! the reference with the current estimate, linearizes the brightness
//! constancy constraint around it and relaxes the quadratic data + smoothness
//! energy with Jacobi sweeps. The convention throughout is
//! `reference(x, y) ≈ target(x + u, y + v)`, so a flow field is indexed in
//! reference-frame coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::media::GrayFrame;

/// Per-pixel displacement from the reference frame to a target frame, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        let n = width * height;
        if n == 0 || u.len() != n || v.len() != n {
            return Err(Error::Data(format!(
                "flow planes of {} and {} samples for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("flow field contains non-finite values".into()));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    /// Uniform displacement `(du, dv)` everywhere.
    pub fn uniform(width: usize, height: usize, du: f32, dv: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![du; width * height],
            v: vec![dv; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    /// Bilinear sample of `(u, v)` at a sub-pixel position, clamped to the field.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (
            bilinear(&self.u, self.width, self.height, x as f32, y as f32) as f64,
            bilinear(&self.v, self.width, self.height, x as f32, y as f32) as f64,
        )
    }

    /// Mean Euclidean length of the displacement vectors.
    pub fn mean_magnitude(&self) -> f64 {
        let sum: f64 = self
            .u
            .iter()
            .zip(&self.v)
            .map(|(&a, &b)| (a as f64).hypot(b as f64))
            .sum();
        sum / self.u.len() as f64
    }

    /// Mean `(u, v)` over the window `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn window_mean(&self, x0: usize, y0: usize, w: usize, h: usize) -> (f64, f64) {
        let (mut su, mut sv) = (0.0, 0.0);
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                su += self.u[y * self.width + x] as f64;
                sv += self.v[y * self.width + x] as f64;
            }
        }
        let n = (w.min(self.width - x0) * h.min(self.height - y0)) as f64;
        (su / n, sv / n)
    }

    /// Adds a constant displacement to every vector.
    pub fn offset(mut self, du: f32, dv: f32) -> Self {
        self.u.iter_mut().for_each(|x| *x += du);
        self.v.iter_mut().for_each(|x| *x += dv);
        self
    }
}

/// Tuning of the coarse-to-fine solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// Horn–Schunck `alpha`, expressed for intensities on a 0–255 scale.
    pub smoothness_weight: f64,
    pub iterations_per_level: usize,
    pub downscale_factor: f64,
    /// Warp / re-linearize cycles per level; each runs `iterations_per_level` sweeps.
    pub warps_per_level: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 4,
            smoothness_weight: 10.0,
            iterations_per_level: 100,
            downscale_factor: 0.5,
            warps_per_level: 1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("flow: {m}")));
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be >= 1".into());
        }
        if !(self.smoothness_weight > 0.0 && self.smoothness_weight.is_finite()) {
            return bad(format!("smoothness_weight must be > 0, got {}", self.smoothness_weight));
        }
        if self.iterations_per_level < 1 {
            return bad("iterations_per_level must be >= 1".into());
        }
        if self.warps_per_level < 1 {
            return bad("warps_per_level must be >= 1".into());
        }
        if !(self.downscale_factor > 0.0 && self.downscale_factor < 1.0) {
            return bad(format!("downscale_factor must be in (0, 1), got {}", self.downscale_factor));
        }
        Ok(())
    }

    /// Smallest frame side that still leaves an 8-pixel coarsest level.
    pub fn min_frame_side(&self) -> usize {
        let mut side = 8;
        while level_size(side, self.downscale_factor, self.pyramid_levels - 1) < 8 {
            side += 1;
        }
        side
    }
}

fn level_size(full: usize, factor: f64, level: usize) -> usize {
    (full as f64 * factor.powi(level as i32)).round() as usize
}

#[inline]
fn bilinear(plane: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (w / total) as f32).collect()
}

/// Separable convolution with edge replication.
fn blur(src: &[f32], w: usize, h: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in kernel.iter().enumerate() {
                let xx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kw * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for (k, &kw) in kernel.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[yy * w..(yy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kw * s;
            }
        }
    }
    out
}

/// Bilinear resize with pixel-centre alignment.
fn resample(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let sx = sw as f32 / dw as f32;
    let sy = sh as f32 / dh as f32;
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let fy = (y as f32 + 0.5) * sy - 0.5;
        for x in 0..dw {
            let fx = (x as f32 + 0.5) * sx - 0.5;
            out.push(bilinear(src, sw, sh, fx, fy));
        }
    }
    out
}

/// Gaussian pyramid, finest first. Level `k` is `downscale_factor^k` times the
/// input size and is low-pass filtered before decimation.
pub fn build_pyramid(frame: &GrayFrame, params: &FlowParams) -> Result<Vec<GrayFrame>> {
    params.validate()?;
    let (w, h) = (frame.width(), frame.height());
    let last = params.pyramid_levels - 1;
    let (cw, ch) = (
        level_size(w, params.downscale_factor, last),
        level_size(h, params.downscale_factor, last),
    );
    contract!(
        cw >= 8 && ch >= 8,
        "{w}x{h} frame too small for {} pyramid levels (coarsest {cw}x{ch} < 8x8)",
        params.pyramid_levels
    );
    let kernel = gaussian_kernel(0.5 / params.downscale_factor);
    let mut levels = vec![frame.clone()];
    for k in 1..params.pyramid_levels {
        let prev = &levels[k - 1];
        let smooth = blur(prev.luma(), prev.width(), prev.height(), &kernel);
        let (nw, nh) = (
            level_size(w, params.downscale_factor, k),
            level_size(h, params.downscale_factor, k),
        );
        let data = resample(&smooth, prev.width(), prev.height(), nw, nh);
        levels.push(GrayFrame::from_raw(nw, nh, data));
    }
    Ok(levels)
}

fn warp_plane(src: &[f32], w: usize, h: usize, u: &[f32], v: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out.push(bilinear(src, w, h, x as f32 + u[i], y as f32 + v[i]));
        }
    }
    out
}

/// Resamples `frame` at `(x + u, y + v)`; samples outside the frame clamp to the edge.
pub fn warp(frame: &GrayFrame, flow: &FlowField) -> Result<GrayFrame> {
    contract!(
        frame.width() == flow.width && frame.height() == flow.height,
        "warp: frame {}x{} vs flow {}x{}",
        frame.width(),
        frame.height(),
        flow.width,
        flow.height
    );
    Ok(GrayFrame::from_raw(
        frame.width(),
        frame.height(),
        warp_plane(frame.luma(), frame.width(), frame.height(), &flow.u, &flow.v),
    ))
}

/// Five-point central differences with clamped indices.
fn gradients(img: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |x: isize, y: isize| {
        img[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            gx.push((at(x - 2, y) - 8.0 * at(x - 1, y) + 8.0 * at(x + 1, y) - at(x + 2, y)) / 12.0);
            gy.push((at(x, y - 2) - 8.0 * at(x, y - 1) + 8.0 * at(x, y + 1) - at(x, y + 2)) / 12.0);
        }
    }
    (gx, gy)
}

struct RefLevel {
    w: usize,
    h: usize,
    img: Vec<f32>,
    gx: Vec<f32>,
    gy: Vec<f32>,
}

/// Linearized Horn–Schunck system for one warp: `ix·u + iy·v + c = 0`.
struct Linearized {
    ix: Vec<f32>,
    iy: Vec<f32>,
    c: Vec<f32>,
    inv: Vec<f32>,
}

fn jacobi_sweep(
    sys: &Linearized,
    w: usize,
    h: usize,
    u: &[f32],
    v: &[f32],
    nu: &mut [f32],
    nv: &mut [f32],
) {
    for y in 0..h {
        let ym = y.saturating_sub(1) * w;
        let yp = (y + 1).min(h - 1) * w;
        let row = y * w;
        let (uu, um, ud) = (&u[ym..ym + w], &u[row..row + w], &u[yp..yp + w]);
        let (vu, vm, vd) = (&v[ym..ym + w], &v[row..row + w], &v[yp..yp + w]);
        let ix = &sys.ix[row..row + w];
        let iy = &sys.iy[row..row + w];
        let c = &sys.c[row..row + w];
        let inv = &sys.inv[row..row + w];
        let out_u = &mut nu[row..row + w];
        let out_v = &mut nv[row..row + w];
        let mut update = |x: usize, ub: f32, vb: f32| {
            let r = (ix[x] * ub + iy[x] * vb + c[x]) * inv[x];
            out_u[x] = ub - ix[x] * r;
            out_v[x] = vb - iy[x] * r;
        };
        update(
            0,
            0.25 * (um[0] + um[1] + uu[0] + ud[0]),
            0.25 * (vm[0] + vm[1] + vu[0] + vd[0]),
        );
        let l = w - 1;
        update(
            l,
            0.25 * (um[l - 1] + um[l] + uu[l] + ud[l]),
            0.25 * (vm[l - 1] + vm[l] + vu[l] + vd[l]),
        );
        // Interior columns, written as zipped slices so the loop vectorizes.
        let inner = 1..l;
        let it = out_u[inner.clone()]
            .iter_mut()
            .zip(out_v[inner.clone()].iter_mut())
            .zip(um[..l - 1].iter().zip(&um[2..]))
            .zip(vm[..l - 1].iter().zip(&vm[2..]))
            .zip(uu[inner.clone()].iter().zip(&ud[inner.clone()]))
            .zip(vu[inner.clone()].iter().zip(&vd[inner.clone()]))
            .zip(ix[inner.clone()].iter().zip(&iy[inner.clone()]))
            .zip(c[inner.clone()].iter().zip(&inv[inner]));
        for (((((((ou, ov), (ul, ur)), (vl, vr)), (ua, ub_)), (va, vb_)), (&gx, &gy)), (&cc, &dd)) in it {
            let ub = 0.25 * (ul + ur + ua + ub_);
            let vb = 0.25 * (vl + vr + va + vb_);
            let r = (gx * ub + gy * vb + cc) * dd;
            *ou = ub - gx * r;
            *ov = vb - gy * r;
        }
    }
}

fn solve_level(
    reference: &RefLevel,
    target: &[f32],
    alpha2: f32,
    params: &FlowParams,
    u: &mut Vec<f32>,
    v: &mut Vec<f32>,
) {
    let (w, h) = (reference.w, reference.h);
    let n = w * h;
    let mut nu = vec![0.0f32; n];
    let mut nv = vec![0.0f32; n];
    for _ in 0..params.warps_per_level {
        let warped = warp_plane(target, w, h, u, v);
        let (wgx, wgy) = gradients(&warped, w, h);
        let mut sys = Linearized {
            ix: Vec::with_capacity(n),
            iy: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            inv: Vec::with_capacity(n),
        };
        for i in 0..n {
            let ix = 0.5 * (reference.gx[i] + wgx[i]);
            let iy = 0.5 * (reference.gy[i] + wgy[i]);
            let it = warped[i] - reference.img[i];
            sys.ix.push(ix);
            sys.iy.push(iy);
            sys.c.push(it - ix * u[i] - iy * v[i]);
            sys.inv.push(1.0 / (alpha2 + ix * ix + iy * iy));
        }
        for _ in 0..params.iterations_per_level {
            jacobi_sweep(&sys, w, h, u, v, &mut nu, &mut nv);
            std::mem::swap(u, &mut nu);
            std::mem::swap(v, &mut nv);
        }
    }
}

/// Resizes a flow field and rescales the vectors to the new pixel units.
fn rescale_flow(u: &[f32], v: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> (Vec<f32>, Vec<f32>) {
    let fx = dw as f32 / sw as f32;
    let fy = dh as f32 / sh as f32;
    let mut nu = resample(u, sw, sh, dw, dh);
    let mut nv = resample(v, sw, sh, dw, dh);
    nu.iter_mut().for_each(|x| *x *= fx);
    nv.iter_mut().for_each(|x| *x *= fy);
    (nu, nv)
}

/// Reusable estimator bound to one reference frame; the reference pyramid and
/// its gradients are computed once.
pub struct FlowEstimator {
    params: FlowParams,
    levels: Vec<RefLevel>,
}

impl FlowEstimator {
    pub fn new(reference: &GrayFrame, params: &FlowParams) -> Result<Self> {
        let pyramid = build_pyramid(reference, params)?;
        let levels = pyramid
            .into_iter()
            .map(|lvl| {
                let (gx, gy) = gradients(lvl.luma(), lvl.width(), lvl.height());
                RefLevel {
                    w: lvl.width(),
                    h: lvl.height(),
                    img: lvl.luma().to_vec(),
                    gx,
                    gy,
                }
            })
            .collect();
        Ok(FlowEstimator {
            params: params.clone(),
            levels,
        })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.levels[0].w
    }

    pub fn height(&self) -> usize {
        self.levels[0].h
    }

    /// Flow from the bound reference to `target`, optionally starting from an
    /// initial estimate (e.g. the previous frame's flow against the same reference).
    pub fn estimate(&self, target: &GrayFrame, initial: Option<&FlowField>) -> Result<FlowField> {
        let (w, h) = (self.width(), self.height());
        contract!(
            target.width() == w && target.height() == h,
            "estimate_flow: reference {w}x{h} vs target {}x{}",
            target.width(),
            target.height()
        );
        if let Some(init) = initial {
            contract!(
                init.width == w && init.height == h,
                "estimate_flow: initial flow {}x{} vs frame {w}x{h}",
                init.width,
                init.height
            );
        }
        let target_pyramid = build_pyramid(target, &self.params)?;
        let alpha = (self.params.smoothness_weight / 255.0) as f32;
        let alpha2 = alpha * alpha;

        let coarsest = self.levels.len() - 1;
        let (cw, ch) = (self.levels[coarsest].w, self.levels[coarsest].h);
        let (mut u, mut v) = match initial {
            Some(init) => rescale_flow(&init.u, &init.v, w, h, cw, ch),
            None => (vec![0.0; cw * ch], vec![0.0; cw * ch]),
        };
        for k in (0..self.levels.len()).rev() {
            let lvl = &self.levels[k];
            if k < coarsest {
                let up = &self.levels[k + 1];
                (u, v) = rescale_flow(&u, &v, up.w, up.h, lvl.w, lvl.h);
            }
            solve_level(lvl, target_pyramid[k].luma(), alpha2, &self.params, &mut u, &mut v);
        }
        FlowField::new(w, h, u, v)
    }
}

/// Flow such that `reference(x, y) ≈ target(x + u, y + v)`.
pub fn estimate_flow(reference: &GrayFrame, target: &GrayFrame, params: &FlowParams) -> Result<FlowField> {
    contract!(
        reference.width() == target.width() && reference.height() == target.height(),
        "estimate_flow: reference {}x{} vs target {}x{}",
        reference.width(),
        reference.height(),
        target.width(),
        target.height()
    );
    FlowEstimator::new(reference, params)?.estimate(target, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayFrame {
        let luma = (0..h)
            .flat_map(|_| (0..w).map(move |x| x as f32 / (w - 1) as f32))
            .collect();
        GrayFrame::new(w, h, luma).unwrap()
    }

    #[test]
    fn single_level_pyramid_is_identity() {
        let f = ramp(16, 12);
        let p = FlowParams {
            pyramid_levels: 1,
            ..Default::default()
        };
        let pyr = build_pyramid(&f, &p).unwrap();
        assert_eq!(pyr, vec![f]);
    }

    #[test]
    fn pyramid_sizes_halve() {
        let f = GrayFrame::constant(64, 64, 0.25).unwrap();
        let p = FlowParams {
            pyramid_levels: 3,
            ..Default::default()
        };
        let pyr = build_pyramid(&f, &p).unwrap();
        let sizes: Vec<_> = pyr.iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(sizes, vec![(64, 64), (32, 32), (16, 16)]);
        for lvl in &pyr {
            assert!(lvl.luma().iter().all(|&x| (x - 0.25).abs() < 1e-6));
        }
    }

    #[test]
    fn pyramid_rejects_tiny_frames() {
        let f = GrayFrame::constant(40, 40, 0.5).unwrap();
        let err = build_pyramid(&f, &FlowParams::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert_eq!(FlowParams::default().min_frame_side(), 60);
    }

    #[test]
    fn zero_warp_is_exact() {
        let f = ramp(9, 7);
        assert_eq!(warp(&f, &FlowField::zeros(9, 7)).unwrap(), f);
    }

    #[test]
    fn integer_warp_shifts_columns() {
        let f = ramp(9, 3);
        let out = warp(&f, &FlowField::uniform(9, 3, 1.0, 0.0)).unwrap();
        for y in 0..3 {
            for x in 0..8 {
                assert_eq!(out.get(x, y), f.get(x + 1, y));
            }
            assert_eq!(out.get(8, y), f.get(8, y));
        }
    }

    #[test]
    fn half_pixel_warp_hits_edge_midpoint() {
        let luma = (0..2).flat_map(|_| [0.0, 0.0, 1.0, 1.0]).collect();
        let f = GrayFrame::new(4, 2, luma).unwrap();
        let out = warp(&f, &FlowField::uniform(4, 2, 0.5, 0.0)).unwrap();
        assert_eq!(out.get(1, 0), 0.5);
        assert_eq!(out.get(0, 1), 0.0);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let a = GrayFrame::constant(64, 64, 0.5).unwrap();
        let b = GrayFrame::constant(64, 60, 0.5).unwrap();
        assert!(matches!(
            estimate_flow(&a, &b, &FlowParams::default()),
            Err(Error::Contract(_))
        ));
        assert!(warp(&a, &FlowField::zeros(10, 10)).is_err());
    }

    #[test]
    fn param_validation() {
        assert!(FlowParams::default().validate().is_ok());
        for bad in [
            FlowParams { pyramid_levels: 0, ..Default::default() },
            FlowParams { smoothness_weight: 0.0, ..Default::default() },
            FlowParams { iterations_per_level: 0, ..Default::default() },
            FlowParams { downscale_factor: 1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
