//! Frame ingestion: binary P6 PPM frames described by a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One RGB frame with planar 8-bit channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    index: usize,
    planes: [Vec<u8>; 3],
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        index: usize,
        red: Vec<u8>,
        green: Vec<u8>,
        blue: Vec<u8>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("frame {index} has empty dimensions {width}x{height}")));
        }
        let n = width * height;
        for (name, plane) in [("red", &red), ("green", &green), ("blue", &blue)] {
            if plane.len() != n {
                return Err(Error::Data(format!(
                    "frame {index}: {name} plane has {} samples, expected {n}",
                    plane.len()
                )));
            }
        }
        Ok(Frame {
            width,
            height,
            index,
            planes: [red, green, blue],
        })
    }

    /// Builds a frame from interleaved `RGBRGB...` bytes.
    pub fn from_interleaved(width: usize, height: usize, index: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::Data(format!(
                "frame {index}: {} interleaved bytes for {width}x{height}",
                rgb.len()
            )));
        }
        let mut planes = [
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
        ];
        for px in rgb.chunks_exact(3) {
            planes[0].push(px[0]);
            planes[1].push(px[1]);
            planes[2].push(px[2]);
        }
        let [r, g, b] = planes;
        Frame::new(width, height, index, r, g, b)
    }

    /// Uniform colour frame.
    pub fn filled(width: usize, height: usize, index: usize, rgb: [u8; 3]) -> Result<Self> {
        let n = width * height;
        Frame::new(width, height, index, vec![rgb[0]; n], vec![rgb[1]; n], vec![rgb[2]; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn red(&self) -> &[u8] {
        &self.planes[0]
    }

    pub fn green(&self) -> &[u8] {
        &self.planes[1]
    }

    pub fn blue(&self) -> &[u8] {
        &self.planes[2]
    }

    /// Channel plane by number (0 = red, 1 = green, 2 = blue).
    pub fn plane(&self, channel: usize) -> &[u8] {
        &self.planes[channel]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    /// Bilinear sample of one channel at a sub-pixel position, clamped to the edges.
    pub fn sample(&self, channel: usize, x: f64, y: f64) -> f64 {
        bilinear_u8(&self.planes[channel], self.width, self.height, x, y)
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            out.extend_from_slice(&[self.planes[0][i], self.planes[1][i], self.planes[2][i]]);
        }
        out
    }
}

fn bilinear_u8(plane: &[u8], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx: usize, yy: usize| plane[yy * width + xx] as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Single-channel luminance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    luma: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, luma: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || luma.len() != width * height {
            return Err(Error::Data(format!(
                "gray frame {width}x{height} with {} samples",
                luma.len()
            )));
        }
        if let Some(bad) = luma.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("luma value {bad} outside [0, 1]")));
        }
        Ok(GrayFrame { width, height, luma })
    }

    /// Internal constructor for intermediate images; the caller guarantees sizes.
    pub(crate) fn from_raw(width: usize, height: usize, luma: Vec<f32>) -> Self {
        debug_assert_eq!(luma.len(), width * height);
        GrayFrame { width, height, luma }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        GrayFrame::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luma(&self) -> &[f32] {
        &self.luma
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.luma[y * self.width + x]
    }

    /// Copy of the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayFrame> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Contract(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut luma = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            luma.extend_from_slice(&self.luma[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(GrayFrame::from_raw(w, h, luma))
    }
}

/// Rec. 601 luminance, scaled to `[0, 1]`.
pub fn to_gray(frame: &Frame) -> GrayFrame {
    let luma = frame.planes[0]
        .iter()
        .zip(&frame.planes[1])
        .zip(&frame.planes[2])
        .map(|((&r, &g), &b)| {
            let y = (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0;
            y.clamp(0.0, 1.0) as f32
        })
        .collect();
    GrayFrame::from_raw(frame.width, frame.height, luma)
}

/// Serializes a frame as binary P6 PPM (maxval 255).
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.to_interleaved());
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Decode {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(self.pos) {
                None => self.err(format!("header truncated before {what}")),
                Some(_) => self.err(format!("expected decimal {what}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Parses a binary P6 PPM with maxval 255. Errors carry the byte offset of the fault.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    match bytes.get(..2) {
        Some(b"P6") => {}
        Some(b"P3") => return Err(cur.err("ASCII PPM (P3) is not supported, expected P6")),
        Some(_) => return Err(cur.err("bad magic number, expected P6")),
        None => return Err(cur.err("header truncated before magic number")),
    }
    cur.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(cur.err("expected whitespace after magic number"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_offset = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Decode {
            offset: maxval_offset,
            reason: format!("empty image {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::Decode {
            offset: maxval_offset,
            reason: format!("maxval {maxval} unsupported, expected 255"),
        });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(cur.err("expected single whitespace after maxval")),
        None => return Err(cur.err("header truncated after maxval")),
    }
    let payload = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let available = bytes.len() - cur.pos;
    if available < payload {
        return Err(Error::Decode {
            offset: bytes.len(),
            reason: format!("payload truncated: {available} of {payload} bytes"),
        });
    }
    Frame::from_interleaved(width, height, 0, &bytes[cur.pos..cur.pos + payload])
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub fps: f64,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    /// File name with one printf-style integer placeholder, e.g. `frame_%06d.ppm`.
    pub frame_name_pattern: String,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Data(format!("manifest fps must be > 0, got {}", self.fps)));
        }
        if self.frame_count < 2 {
            return Err(Error::Data(format!(
                "manifest frame_count must be >= 2, got {}",
                self.frame_count
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Data("manifest width and height must be > 0".into()));
        }
        parse_pattern(&self.frame_name_pattern)?;
        Ok(())
    }

    pub fn frame_name(&self, index: usize) -> Result<String> {
        let (prefix, pad, suffix) = parse_pattern(&self.frame_name_pattern)?;
        Ok(format!("{prefix}{index:0pad$}{suffix}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SequenceManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }
}

/// Splits `frame_%06d.ppm` into (`frame_`, 6, `.ppm`).
fn parse_pattern(pattern: &str) -> Result<(&str, usize, &str)> {
    let bad = || {
        Error::Data(format!(
            "frame_name_pattern {pattern:?} must contain exactly one %d or %0Nd placeholder"
        ))
    };
    let start = pattern.find('%').ok_or_else(bad)?;
    let rest = &pattern[start + 1..];
    let d = rest.find('d').ok_or_else(bad)?;
    let spec = &rest[..d];
    let pad = if spec.is_empty() {
        0
    } else if let Some(digits) = spec.strip_prefix('0') {
        digits.parse::<usize>().map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    let suffix = &rest[d + 1..];
    if suffix.contains('%') {
        return Err(bad());
    }
    Ok((&pattern[..start], pad, suffix))
}

/// Lazily reads frames in index order. Each frame is decoded only when requested.
pub struct FrameSequence {
    manifest: SequenceManifest,
    dir: PathBuf,
    next: usize,
}

impl FrameSequence {
    pub fn manifest(&self) -> &SequenceManifest {
        &self.manifest
    }

    pub fn frame_path(&self, index: usize) -> Result<PathBuf> {
        Ok(self.dir.join(self.manifest.frame_name(index)?))
    }

    /// Reads one frame by index, independent of the iteration cursor.
    pub fn read(&self, index: usize) -> Result<Frame> {
        let path = self.frame_path(index)?;
        let bytes = fs::read(&path).map_err(|source| Error::Ingest {
            index,
            path: path.clone(),
            source,
        })?;
        let frame = decode_frame(&bytes).map_err(|e| match e {
            Error::Decode { offset, reason } => Error::Decode {
                offset,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })?;
        if frame.width() != self.manifest.width || frame.height() != self.manifest.height {
            return Err(Error::Data(format!(
                "frame {index} is {}x{}, manifest says {}x{}",
                frame.width(),
                frame.height(),
                self.manifest.width,
                self.manifest.height
            )));
        }
        Ok(frame.with_index(index))
    }
}

impl Iterator for FrameSequence {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.manifest.frame_count {
            return None;
        }
        let index = self.next;
        self.next += 1;
        Some(self.read(index))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.manifest.frame_count - self.next;
        (left, Some(left))
    }
}

/// Opens a manifest; frame paths resolve relative to the manifest's directory.
pub fn read_frame_sequence(manifest_path: &Path) -> Result<FrameSequence> {
    let manifest = SequenceManifest::load(manifest_path)?;
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(FrameSequence {
        manifest,
        dir,
        next: 0,
    })
}

/// Writes `manifest.json` plus one PPM per frame into `dir`.
pub fn write_frame_sequence<I>(dir: &Path, manifest: &SequenceManifest, frames: I) -> Result<()>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    manifest.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = 0;
    for frame in frames {
        let frame = frame?;
        let path = dir.join(manifest.frame_name(frame.index())?);
        fs::write(&path, encode_frame(&frame)).map_err(|e| Error::io(&path, e))?;
        written += 1;
    }
    if written != manifest.frame_count {
        return Err(Error::Data(format!(
            "wrote {written} frames but manifest declares {}",
            manifest.frame_count
        )));
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_single_red_pixel() {
        let frame = decode_frame(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!((frame.width(), frame.height()), (1, 1));
        assert_eq!(frame.pixel(0, 0), [255, 0, 0]);
    }

    #[test]
    fn rejects_ascii_ppm() {
        let err = decode_frame(b"P3\n1 1\n255\n255 0 0\n").unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 0, .. }), "{err}");
    }

    #[test]
    fn two_by_two_plane_layout() {
        // Row-major, top-left origin: (0,0) (1,0) / (0,1) (1,1).
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
        let f = decode_frame(&bytes).unwrap();
        assert_eq!(f.red(), &[1, 4, 7, 10]);
        assert_eq!(f.green(), &[2, 5, 8, 11]);
        assert_eq!(f.blue(), &[3, 6, 9, 12]);
        assert_eq!(f.pixel(1, 0), [4, 5, 6]);
        assert_eq!(f.pixel(0, 1), [7, 8, 9]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let f = decode_frame(b"P6\n# made by hand\n1 # w\n1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(f.pixel(0, 0), [1, 2, 3]);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let bytes = b"P6\n2 1\n255\n\x01\x02\x03\x04";
        match decode_frame(bytes).unwrap_err() {
            Error::Decode { offset, .. } => assert_eq!(offset, bytes.len()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_width_reports_offset() {
        match decode_frame(b"P6\nxx 1\n255\n").unwrap_err() {
            Error::Decode { offset, .. } => assert_eq!(offset, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_other_maxval() {
        assert!(decode_frame(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").is_err());
    }

    #[test]
    fn gray_conversion() {
        let black = Frame::filled(3, 2, 0, [0, 0, 0]).unwrap();
        assert!(to_gray(&black).luma().iter().all(|&v| v == 0.0));
        let white = Frame::filled(3, 2, 0, [255, 255, 255]).unwrap();
        assert!(to_gray(&white).luma().iter().all(|&v| v == 1.0));
        let red = Frame::filled(1, 1, 0, [255, 0, 0]).unwrap();
        assert!((to_gray(&red).luma()[0] - 0.299).abs() < 1e-7);
    }

    #[test]
    fn pattern_formatting() {
        let m = SequenceManifest {
            fps: 30.0,
            frame_count: 2,
            width: 1,
            height: 1,
            frame_name_pattern: "frame_%06d.ppm".into(),
        };
        assert_eq!(m.frame_name(12).unwrap(), "frame_000012.ppm");
        let plain = SequenceManifest {
            frame_name_pattern: "f%d.ppm".into(),
            ..m.clone()
        };
        assert_eq!(plain.frame_name(7).unwrap(), "f7.ppm");
        let bad = SequenceManifest {
            frame_name_pattern: "frame.ppm".into(),
            ..m
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_identity(w in 1usize..=64, h in 1usize..=64, seed in any::<u64>()) {
            let mut state = seed | 1;
            let bytes: Vec<u8> = (0..w * h * 3)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 24) as u8
                })
                .collect();
            let frame = Frame::from_interleaved(w, h, 0, &bytes).unwrap();
            prop_assert_eq!(decode_frame(&encode_frame(&frame)).unwrap(), frame);
        }

        #[test]
        fn gray_is_bounded_and_monotone(r in any::<u8>(), g in any::<u8>(), b in any::<u8>(), ch in 0usize..3) {
            let base = [r, g, b];
            let mut brighter = base;
            brighter[ch] = brighter[ch].saturating_add(1);
            let lo = to_gray(&Frame::filled(1, 1, 0, base).unwrap()).luma()[0];
            let hi = to_gray(&Frame::filled(1, 1, 0, brighter).unwrap()).luma()[0];
            prop_assert!((0.0..=1.0).contains(&lo));
            prop_assert!(hi >= lo);
        }
    }
}
