//! Rectangular sample grids, their propagation through flow fields, and the
//! per-frame reductions that turn a video into one raw signal per region.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::flow::{FlowEstimator, FlowField, FlowParams};
use crate::media::{to_gray, Frame, GrayFrame};

/// Fraction of clamped points above which tracking is reported as degraded.
pub const DEGRADED_FRACTION: f64 = 0.2;

/// Minimum number of lattice points in a grid.
pub const MIN_GRID_POINTS: usize = 16;

/// Axis-aligned rectangle in first-frame pixel coordinates. The lattice spans
/// the closed box `[x0, x0 + w] × [y0, y0 + h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct RoiRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl RoiRect {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w < 8 || h < 8 {
            return Err(Error::Config(format!("ROI {w}x{h} is smaller than 8x8")));
        }
        Ok(RoiRect { x0, y0, w, h })
    }

    pub fn validate_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x0 + self.w >= width || self.y0 + self.h >= height {
            return Err(Error::Config(format!(
                "ROI {self} does not fit inside the {width}x{height} frame"
            )));
        }
        Ok(())
    }
}

impl TryFrom<[usize; 4]> for RoiRect {
    type Error = Error;

    fn try_from(v: [usize; 4]) -> Result<Self> {
        RoiRect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<RoiRect> for [usize; 4] {
    fn from(r: RoiRect) -> Self {
        [r.x0, r.y0, r.w, r.h]
    }
}

impl fmt::Display for RoiRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.w, self.h)
    }
}

impl FromStr for RoiRect {
    type Err = Error;

    /// Parses `x0,y0,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("ROI {s:?} is not x0,y0,w,h")))?;
        match parts[..] {
            [x0, y0, w, h] => RoiRect::new(x0, y0, w, h),
            _ => Err(Error::Config(format!("ROI {s:?} is not x0,y0,w,h"))),
        }
    }
}

/// Lattice of sample points anchored in the first frame, plus their current
/// tracked positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiGrid {
    origin_rect: RoiRect,
    spacing: f64,
    lattice: Vec<[f64; 2]>,
    points: Vec<[f64; 2]>,
    flagged: Vec<bool>,
}

impl RoiGrid {
    pub fn origin_rect(&self) -> RoiRect {
        self.origin_rect
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Current positions of the tracked points.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// First-frame positions of the points.
    pub fn lattice(&self) -> &[[f64; 2]] {
        &self.lattice
    }

    /// Per point: whether it was clamped back into the frame during the last update.
    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_degraded(&self) -> bool {
        let n = self.flagged.iter().filter(|&&f| f).count();
        n as f64 > DEGRADED_FRACTION * self.flagged.len() as f64
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(ax, ay), p| (ax + p[0], ay + p[1]));
        [sx / n, sy / n]
    }
}

/// Row-major lattice covering the rectangle corners and its interior at `spacing`.
pub fn make_grid(rect: RoiRect, spacing: f64) -> Result<RoiGrid> {
    contract!(
        spacing.is_finite() && spacing >= 1.0,
        "grid spacing must be >= 1 px, got {spacing}"
    );
    let nx = (rect.w as f64 / spacing + 1e-9).floor() as usize + 1;
    let ny = (rect.h as f64 / spacing + 1e-9).floor() as usize + 1;
    contract!(
        nx * ny >= MIN_GRID_POINTS,
        "ROI {rect} with spacing {spacing} gives {nx}x{ny} = {} points, need at least {MIN_GRID_POINTS}",
        nx * ny
    );
    let lattice: Vec<[f64; 2]> = (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| {
                [
                    rect.x0 as f64 + i as f64 * spacing,
                    rect.y0 as f64 + j as f64 * spacing,
                ]
            })
        })
        .collect();
    Ok(RoiGrid {
        origin_rect: rect,
        spacing,
        points: lattice.clone(),
        flagged: vec![false; lattice.len()],
        lattice,
    })
}

/// Anything that maps a first-frame position to its displacement in the current frame.
pub trait DisplacementField {
    /// `(width, height)` of the frames the displacements refer to.
    fn frame_size(&self) -> (usize, usize);

    fn displacement(&self, x: f64, y: f64) -> (f64, f64);
}

impl DisplacementField for FlowField {
    fn frame_size(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn displacement(&self, x: f64, y: f64) -> (f64, f64) {
        self.sample(x, y)
    }
}

/// Flow computed on a sub-window of the frame; positions are in full-frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedFlow {
    pub x0: usize,
    pub y0: usize,
    pub field: FlowField,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl DisplacementField for WindowedFlow {
    fn frame_size(&self) -> (usize, usize) {
        (self.frame_width, self.frame_height)
    }

    fn displacement(&self, x: f64, y: f64) -> (f64, f64) {
        self.field.sample(x - self.x0 as f64, y - self.y0 as f64)
    }
}

/// Moves every lattice point by the displacement sampled at its first-frame
/// position. Points pushed out of the frame are clamped and flagged.
pub fn track_grid<D: DisplacementField + ?Sized>(grid: &RoiGrid, flow: &D) -> RoiGrid {
    let (w, h) = flow.frame_size();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let mut points = Vec::with_capacity(grid.lattice.len());
    let mut flagged = Vec::with_capacity(grid.lattice.len());
    for p in &grid.lattice {
        let (du, dv) = flow.displacement(p[0], p[1]);
        let (x, y) = (p[0] + du, p[1] + dv);
        let (cx, cy) = (x.clamp(0.0, xmax), y.clamp(0.0, ymax));
        flagged.push(cx != x || cy != y);
        points.push([cx, cy]);
    }
    let tracked = RoiGrid {
        points,
        flagged,
        ..grid.clone()
    };
    if tracked.is_degraded() {
        warn!(
            "tracking degraded for ROI {}: more than {:.0}% of points left the frame",
            grid.origin_rect,
            DEGRADED_FRACTION * 100.0
        );
    }
    tracked
}

/// Which displacement component forms a motion signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionAxis {
    X,
    #[default]
    Y,
    /// `u + v`; carries both horizontal and vertical oscillations.
    Xy,
}

impl MotionAxis {
    fn component(self, (u, v): (f64, f64)) -> f64 {
        match self {
            MotionAxis::X => u,
            MotionAxis::Y => v,
            MotionAxis::Xy => u + v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    MotionHorizontal,
    MotionVertical,
    MotionSum,
    ColorWeighted,
}

impl From<MotionAxis> for SignalKind {
    fn from(axis: MotionAxis) -> Self {
        match axis {
            MotionAxis::X => SignalKind::MotionHorizontal,
            MotionAxis::Y => SignalKind::MotionVertical,
            MotionAxis::Xy => SignalKind::MotionSum,
        }
    }
}

/// Uniformly sampled scalar signal, one sample per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSignal {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub kind: SignalKind,
}

impl RawSignal {
    pub fn new(samples: Vec<f64>, fs: f64, kind: SignalKind) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Contract(format!("sampling rate must be > 0, got {fs}")));
        }
        Ok(RawSignal { samples, fs, kind })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.fs
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> RawSignal {
        RawSignal {
            samples,
            fs: self.fs,
            kind: self.kind,
        }
    }
}

/// What each frame is reduced to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalSpec {
    Motion(MotionAxis),
    /// Weighted sum of the per-channel means (R, G, B).
    Color([f64; 3]),
}

impl SignalSpec {
    pub fn kind(&self) -> SignalKind {
        match self {
            SignalSpec::Motion(axis) => (*axis).into(),
            SignalSpec::Color(_) => SignalKind::ColorWeighted,
        }
    }
}

/// Where flow is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingOptions {
    /// Context kept around the ROIs' bounding box when flow is computed on a window.
    pub window_margin_px: usize,
    /// Compute flow on the whole frame instead of a window around the ROIs.
    pub full_frame: bool,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        TrackingOptions {
            window_margin_px: 32,
            full_frame: false,
        }
    }
}

/// Computes flow from the first frame to each later frame.
///
/// The reference is always frame 0. Each estimate starts from the previous
/// frame's estimate, and the target window follows the regions by the
/// rounded mean displacement so that slow drift of tens of pixels stays in view.
pub struct ReferenceTracker {
    estimator: FlowEstimator,
    window: (usize, usize, usize, usize),
    focus: (usize, usize, usize, usize),
    frame_size: (usize, usize),
    previous: Option<FlowField>,
}

impl ReferenceTracker {
    pub fn new(
        reference: &GrayFrame,
        rois: &[RoiRect],
        params: &FlowParams,
        options: &TrackingOptions,
    ) -> Result<Self> {
        params.validate()?;
        let (fw, fh) = (reference.width(), reference.height());
        contract!(!rois.is_empty(), "at least one ROI is required");
        for r in rois {
            r.validate_within(fw, fh)?;
        }
        let x0 = rois.iter().map(|r| r.x0).min().unwrap();
        let y0 = rois.iter().map(|r| r.y0).min().unwrap();
        let x1 = rois.iter().map(|r| r.x0 + r.w + 1).max().unwrap();
        let y1 = rois.iter().map(|r| r.y0 + r.h + 1).max().unwrap();
        let focus = (x0, y0, x1 - x0, y1 - y0);
        let window = if options.full_frame {
            (0, 0, fw, fh)
        } else {
            let min_side = params.min_frame_side();
            let m = options.window_margin_px;
            let (wx0, ww) = expand_span(x0, x1, m, min_side, fw);
            let (wy0, wh) = expand_span(y0, y1, m, min_side, fh);
            (wx0, wy0, ww, wh)
        };
        let crop = reference.crop(window.0, window.1, window.2, window.3)?;
        let estimator = FlowEstimator::new(&crop, params)?;
        Ok(ReferenceTracker {
            estimator,
            window,
            focus,
            frame_size: (fw, fh),
            previous: None,
        })
    }

    /// Flow window `(x0, y0, w, h)` in reference coordinates.
    pub fn window(&self) -> (usize, usize, usize, usize) {
        self.window
    }

    fn wrap(&self, field: FlowField) -> WindowedFlow {
        WindowedFlow {
            x0: self.window.0,
            y0: self.window.1,
            field,
            frame_width: self.frame_size.0,
            frame_height: self.frame_size.1,
        }
    }

    /// Identity flow for the reference frame itself.
    pub fn reference_flow(&self) -> WindowedFlow {
        self.wrap(FlowField::zeros(self.window.2, self.window.3))
    }

    pub fn track(&mut self, frame: &GrayFrame) -> Result<WindowedFlow> {
        contract!(
            (frame.width(), frame.height()) == self.frame_size,
            "frame {}x{} differs from reference {}x{}",
            frame.width(),
            frame.height(),
            self.frame_size.0,
            self.frame_size.1
        );
        let (wx0, wy0, ww, wh) = self.window;
        let (fw, fh) = self.frame_size;
        let (mu, mv) = match &self.previous {
            Some(prev) => {
                let (fx, fy, fww, fwh) = self.focus;
                prev.window_mean(fx - wx0, fy - wy0, fww, fwh)
            }
            None => (0.0, 0.0),
        };
        let ox = (mu.round() as i64).clamp(-(wx0 as i64), (fw - ww - wx0) as i64);
        let oy = (mv.round() as i64).clamp(-(wy0 as i64), (fh - wh - wy0) as i64);
        let target = frame.crop((wx0 as i64 + ox) as usize, (wy0 as i64 + oy) as usize, ww, wh)?;
        let initial = self
            .previous
            .as_ref()
            .map(|p| p.clone().offset(-ox as f32, -oy as f32));
        let residual = self.estimator.estimate(&target, initial.as_ref())?;
        let full = residual.offset(ox as f32, oy as f32);
        self.previous = Some(full.clone());
        Ok(self.wrap(full))
    }
}

/// Widens `[lo, hi)` by `margin` and to at least `min_len`, within `[0, limit)`.
fn expand_span(lo: usize, hi: usize, margin: usize, min_len: usize, limit: usize) -> (usize, usize) {
    let mut a = lo.saturating_sub(margin);
    let mut b = (hi + margin).min(limit);
    while b - a < min_len && (a > 0 || b < limit) {
        if a > 0 {
            a -= 1;
        }
        if b - a < min_len && b < limit {
            b += 1;
        }
    }
    (a, b - a)
}

/// Runs the tracker over a frame stream and reduces every frame for each grid.
pub struct SignalExtractor {
    pub grids: Vec<RoiGrid>,
    pub spec: SignalSpec,
    pub flow: FlowParams,
    pub tracking: TrackingOptions,
    pub fs: f64,
}

impl SignalExtractor {
    pub fn run<I>(&self, frames: I) -> Result<Vec<RawSignal>>
    where
        I: IntoIterator<Item = Result<Frame>>,
    {
        self.run_with(frames, |_, _| Ok(()))
    }

    /// Like [`run`](Self::run), calling `on_flow(frame_index, flows)` for every
    /// frame with one flow per tracking window.
    pub fn run_with<I, F>(&self, frames: I, mut on_flow: F) -> Result<Vec<RawSignal>>
    where
        I: IntoIterator<Item = Result<Frame>>,
        F: FnMut(usize, &[WindowedFlow]) -> Result<()>,
    {
        let mut samples = vec![Vec::new(); self.grids.len()];
        self.drive(
            frames.into_iter().map(|f| f.map(|f| (to_gray(&f), Some(f)))),
            |t, flows, frame| {
                on_flow(t, flows)?;
                for (k, (grid, out)) in self.grids.iter().zip(samples.iter_mut()).enumerate() {
                    out.push(self.reduce(grid, &flows[self.window_of(k)], frame)?);
                }
                Ok(())
            },
        )?;
        samples
            .into_iter()
            .map(|s| RawSignal::new(s, self.fs, self.spec.kind()))
            .collect()
    }

    /// Tracking window serving grid `k`: its own, or the shared full frame.
    fn window_of(&self, k: usize) -> usize {
        if self.tracking.full_frame {
            0
        } else {
            k
        }
    }

    fn reduce(&self, grid: &RoiGrid, flow: &WindowedFlow, frame: Option<&Frame>) -> Result<f64> {
        match self.spec {
            SignalSpec::Motion(axis) => Ok(motion_sample(grid, flow, axis)),
            SignalSpec::Color(weights) => {
                let frame = frame.ok_or_else(|| {
                    Error::Contract("colour signals need RGB frames".into())
                })?;
                let tracked = track_grid(grid, flow);
                Ok(color_sample(&tracked, frame, weights))
            }
        }
    }

    fn drive<I, F>(&self, frames: I, mut per_frame: F) -> Result<()>
    where
        I: Iterator<Item = Result<(GrayFrame, Option<Frame>)>>,
        F: FnMut(usize, &[WindowedFlow], Option<&Frame>) -> Result<()>,
    {
        contract!(
            self.fs.is_finite() && self.fs > 0.0,
            "sampling rate must be > 0, got {}",
            self.fs
        );
        contract!(!self.grids.is_empty(), "no ROI grids to extract");
        let rois: Vec<RoiRect> = self.grids.iter().map(RoiGrid::origin_rect).collect();
        // Each region is tracked in its own window so its signal does not
        // depend on which other regions are processed alongside it.
        let groups: Vec<Vec<RoiRect>> = if self.tracking.full_frame {
            vec![rois]
        } else {
            rois.iter().map(|r| vec![*r]).collect()
        };
        let mut trackers: Vec<ReferenceTracker> = Vec::new();
        let mut count = 0;
        for (t, item) in frames.enumerate() {
            let (gray, frame) = item?;
            if let Some(f) = &frame {
                if f.index() != t {
                    return Err(Error::Data(format!(
                        "frame stream out of order: expected index {t}, got {}",
                        f.index()
                    )));
                }
            }
            let flows = if trackers.is_empty() {
                trackers = groups
                    .iter()
                    .map(|g| ReferenceTracker::new(&gray, g, &self.flow, &self.tracking))
                    .collect::<Result<_>>()?;
                trackers.iter().map(ReferenceTracker::reference_flow).collect()
            } else {
                trackers
                    .par_iter_mut()
                    .map(|tr| tr.track(&gray))
                    .collect::<Result<Vec<_>>>()?
            };
            per_frame(t, &flows, frame.as_ref())?;
            count += 1;
        }
        contract!(count >= 2, "need at least 2 frames, got {count}");
        Ok(())
    }
}

/// Mean displacement component over the grid's first-frame lattice.
fn motion_sample<D: DisplacementField>(grid: &RoiGrid, flow: &D, axis: MotionAxis) -> f64 {
    let sum: f64 = grid
        .lattice
        .iter()
        .map(|p| axis.component(flow.displacement(p[0], p[1])))
        .sum();
    sum / grid.lattice.len() as f64
}

fn color_sample(tracked: &RoiGrid, frame: &Frame, weights: [f64; 3]) -> f64 {
    let n = tracked.points.len() as f64;
    let mut means = [0.0; 3];
    for (c, mean) in means.iter_mut().enumerate() {
        let sum: f64 = tracked
            .points
            .iter()
            .map(|p| frame.sample(c, p[0], p[1]))
            .sum();
        *mean = sum / n;
    }
    weights[0] * means[0] + weights[1] * means[1] + weights[2] * means[2]
}

/// Vertical (or other axis) motion signal of one region: the mean flow
/// component over the grid, with frame 0 as the reference. `sample[0] = 0`.
pub fn extract_motion_signal<I>(
    frames: I,
    grid: &RoiGrid,
    params: &FlowParams,
    fs: f64,
    axis: MotionAxis,
) -> Result<RawSignal>
where
    I: IntoIterator<Item = Result<GrayFrame>>,
{
    let extractor = SignalExtractor {
        grids: vec![grid.clone()],
        spec: SignalSpec::Motion(axis),
        flow: params.clone(),
        tracking: TrackingOptions::default(),
        fs,
    };
    let mut samples = Vec::new();
    extractor.drive(
        frames.into_iter().map(|g| g.map(|g| (g, None))),
        |_, flows, _| {
            samples.push(motion_sample(grid, &flows[0], axis));
            Ok(())
        },
    )?;
    RawSignal::new(samples, fs, axis.into())
}

/// Weighted RGB signal of one region sampled at the tracked grid positions.
pub fn extract_color_signal<I>(
    frames: I,
    grid: &RoiGrid,
    weights: [f64; 3],
    params: &FlowParams,
    fs: f64,
) -> Result<RawSignal>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    contract!(
        weights.iter().all(|w| w.is_finite()),
        "colour weights must be finite, got {weights:?}"
    );
    let extractor = SignalExtractor {
        grids: vec![grid.clone()],
        spec: SignalSpec::Color(weights),
        flow: params.clone(),
        tracking: TrackingOptions::default(),
        fs,
    };
    Ok(extractor.run(frames)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_grid_has_sixteen_points() {
        let g = make_grid(RoiRect::new(0, 0, 10, 10).unwrap(), 10.0 / 3.0).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.points()[15], [10.0, 10.0]);
    }

    #[test]
    fn too_sparse_grid_is_rejected() {
        let err = make_grid(RoiRect::new(0, 0, 30, 20).unwrap(), 10.0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
    }

    #[test]
    fn lattice_counting() {
        let rect = RoiRect::new(3, 4, 40, 40).unwrap();
        let g = make_grid(rect, 5.0).unwrap();
        assert_eq!(g.len(), 81);
        assert!(g.points().iter().all(|p| p[0] >= 3.0
            && p[0] <= 43.0
            && p[1] >= 4.0
            && p[1] <= 44.0));
        // row-major
        assert_eq!(g.points()[1], [8.0, 4.0]);
        assert_eq!(g.points()[9], [3.0, 9.0]);
    }

    #[test]
    fn tiny_rect_rejected() {
        assert!(RoiRect::new(0, 0, 7, 20).is_err());
        assert!("1,2,3".parse::<RoiRect>().is_err());
        assert_eq!("1,2,30,40".parse::<RoiRect>().unwrap(), RoiRect { x0: 1, y0: 2, w: 30, h: 40 });
    }

    #[test]
    fn zero_flow_keeps_grid() {
        let g = make_grid(RoiRect::new(5, 5, 20, 20).unwrap(), 5.0).unwrap();
        let t = track_grid(&g, &FlowField::zeros(64, 48));
        assert_eq!(t.points(), g.points());
        assert!(!t.is_degraded());
    }

    #[test]
    fn uniform_flow_shifts_grid() {
        let g = make_grid(RoiRect::new(5, 5, 20, 20).unwrap(), 5.0).unwrap();
        let t = track_grid(&g, &FlowField::uniform(64, 48, 0.0, 2.0));
        for (a, b) in g.points().iter().zip(t.points()) {
            assert_eq!(b[0], a[0]);
            assert_eq!(b[1], a[1] + 2.0);
        }
        // positions stay anchored at the lattice: tracking twice is not cumulative
        let tt = track_grid(&t, &FlowField::uniform(64, 48, 0.0, 2.0));
        assert_eq!(tt.points(), t.points());
    }

    #[test]
    fn points_leaving_frame_are_flagged() {
        let g = make_grid(RoiRect::new(5, 5, 20, 20).unwrap(), 5.0).unwrap();
        let t = track_grid(&g, &FlowField::uniform(32, 32, 12.0, 0.0));
        assert!(t.points().iter().all(|p| p[0] <= 31.0));
        assert!(t.flagged().iter().any(|&f| f));
        assert!(t.is_degraded());
    }

    #[test]
    fn window_expansion() {
        assert_eq!(expand_span(100, 140, 32, 60, 320), (68, 104));
        assert_eq!(expand_span(10, 20, 0, 60, 320), (0, 60));
        assert_eq!(expand_span(300, 310, 0, 60, 320), (260, 60));
        assert_eq!(expand_span(0, 10, 0, 60, 40), (0, 40));
    }

    #[test]
    fn color_signal_of_static_gray_scene() {
        let frames = (0..3).map(|i| Frame::filled(96, 80, i, [128, 128, 128]));
        let grid = make_grid(RoiRect::new(20, 20, 30, 30).unwrap(), 5.0).unwrap();
        let sig = extract_color_signal(frames, &grid, [1.0, 1.0, 1.0], &FlowParams::default(), 30.0)
            .unwrap();
        assert_eq!(sig.samples, vec![384.0; 3]);
        assert_eq!(sig.kind, SignalKind::ColorWeighted);

        let frames = (0..3).map(|i| Frame::filled(96, 80, i, [128, 128, 128]));
        let sig = extract_color_signal(frames, &grid, [0.0; 3], &FlowParams::default(), 30.0).unwrap();
        assert_eq!(sig.samples, vec![0.0; 3]);
    }

    #[test]
    fn single_frame_is_rejected() {
        let frames = (0..1).map(|i| Frame::filled(96, 80, i, [1, 2, 3]));
        let grid = make_grid(RoiRect::new(20, 20, 30, 30).unwrap(), 5.0).unwrap();
        assert!(extract_color_signal(frames, &grid, [1.0; 3], &FlowParams::default(), 30.0).is_err());
    }
}
