//! Deterministic flux-versus-wavelength plots.
//!
//! Output is a 960x480 RGB PNG with no ancillary chunks. All geometry is
//! computed with basic IEEE arithmetic (no libm calls), so identical inputs
//! give identical bytes on every platform.

mod font;

use crate::spectrum::{Spectrum, WavelengthRange};

pub const WIDTH: u32 = 960;
pub const HEIGHT: u32 = 480;

const MARGIN_LEFT: i64 = 100;
const MARGIN_RIGHT: i64 = 24;
const MARGIN_TOP: i64 = 44;
const MARGIN_BOTTOM: i64 = 64;

type Rgb = [u8; 3];
const WHITE: Rgb = [255, 255, 255];
const BLACK: Rgb = [0, 0, 0];
const GRID: Rgb = [225, 225, 225];
const TRACE: Rgb = [31, 88, 160];

struct Canvas {
    pixels: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Self {
            pixels: WHITE.repeat((WIDTH * HEIGHT) as usize),
        }
    }

    fn put(&mut self, x: i64, y: i64, color: Rgb) {
        if x < 0 || y < 0 || x >= WIDTH as i64 || y >= HEIGHT as i64 {
            return;
        }
        let i = 3 * (y as usize * WIDTH as usize + x as usize);
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    fn hline(&mut self, x0: i64, x1: i64, y: i64, color: Rgb) {
        for x in x0.min(x1)..=x0.max(x1) {
            self.put(x, y, color);
        }
    }

    fn vline(&mut self, x: i64, y0: i64, y1: i64, color: Rgb) {
        for y in y0.min(y1)..=y0.max(y1) {
            self.put(x, y, color);
        }
    }

    /// Bresenham segment.
    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, color);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, text: &str, scale: usize, color: Rgb) {
        let s = scale as i64;
        for (n, c) in text.chars().enumerate() {
            let ox = x + (n * font::ADVANCE) as i64 * s;
            for (col, bits) in font::glyph(c).iter().enumerate() {
                for row in 0..font::GLYPH_HEIGHT {
                    if bits >> row & 1 == 1 {
                        for dy in 0..s {
                            for dx in 0..s {
                                self.put(ox + col as i64 * s + dx, y + row as i64 * s + dy, color);
                            }
                        }
                    }
                }
            }
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, WIDTH, HEIGHT);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Balanced);
            enc.set_filter(png::Filter::Sub);
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer
                .write_image_data(&self.pixels)
                .expect("in-memory PNG data");
        }
        out
    }
}

/// Tick step from the 1-2-5 series giving at most `max_ticks` intervals.
fn nice_step(span: f64, max_ticks: usize) -> f64 {
    let raw = span / max_ticks as f64;
    let mut magnitude = 1.0;
    while magnitude > raw {
        magnitude /= 10.0;
    }
    while magnitude * 10.0 <= raw {
        magnitude *= 10.0;
    }
    for m in [1.0, 2.0, 5.0, 10.0] {
        if m * magnitude >= raw {
            return m * magnitude;
        }
    }
    10.0 * magnitude
}

/// Decimal places needed to print multiples of `step` distinctly.
fn decimals_for(step: f64) -> usize {
    let mut d = 0;
    let mut unit = 1.0;
    while unit > step * 1.000_001 && d < 8 {
        unit /= 10.0;
        d += 1;
    }
    d
}

fn ticks(lo: f64, hi: f64, max_ticks: usize) -> (Vec<f64>, usize) {
    let step = nice_step(hi - lo, max_ticks);
    let first = (lo / step).ceil();
    let mut out = Vec::new();
    let mut k = first;
    loop {
        let v = k * step;
        if v > hi + step * 1e-9 {
            break;
        }
        out.push(v);
        k += 1.0;
    }
    (out, decimals_for(step))
}

/// Vertical extent of the plot: data min/max padded by 5%, or a unit band
/// around a constant signal.
fn flux_limits(flux: &[f64]) -> (f64, f64) {
    let lo = flux.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flux.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let half = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - half, hi + half)
    }
}

/// Render the samples of `spec` inside `range` as a polyline plot.
///
/// `spec` is expected to already be sliced to `range`; samples outside the
/// range are still clipped to the plot frame. `label`, when present, is drawn
/// as the title.
pub fn plot(spec: &Spectrum, range: &WavelengthRange, label: Option<&str>) -> Vec<u8> {
    let mut canvas = Canvas::new();
    let left = MARGIN_LEFT;
    let right = WIDTH as i64 - MARGIN_RIGHT;
    let top = MARGIN_TOP;
    let bottom = HEIGHT as i64 - MARGIN_BOTTOM;
    let (x_lo, x_hi) = (range.min(), range.max());
    let (y_lo, y_hi) = flux_limits(spec.flux());

    let to_px = |l: f64| left as f64 + (l - x_lo) / (x_hi - x_lo) * (right - left) as f64;
    let to_py = |f: f64| bottom as f64 - (f - y_lo) / (y_hi - y_lo) * (bottom - top) as f64;

    let (xt, xdec) = ticks(x_lo, x_hi, 8);
    for &v in &xt {
        let px = to_px(v).round() as i64;
        canvas.vline(px, top, bottom, GRID);
        canvas.vline(px, bottom, bottom + 5, BLACK);
        let text = format!("{v:.xdec$}");
        let w = font::text_width(&text, 2) as i64;
        canvas.text(px - w / 2, bottom + 10, &text, 2, BLACK);
    }
    let (yt, ydec) = ticks(y_lo, y_hi, 6);
    for &v in &yt {
        let py = to_py(v).round() as i64;
        canvas.hline(left, right, py, GRID);
        canvas.hline(left - 5, left, py, BLACK);
        let text = format!("{v:.ydec$}");
        let w = font::text_width(&text, 2) as i64;
        canvas.text(left - 10 - w, py - 7, &text, 2, BLACK);
    }

    canvas.hline(left, right, top, BLACK);
    canvas.hline(left, right, bottom, BLACK);
    canvas.vline(left, top, bottom, BLACK);
    canvas.vline(right, top, bottom, BLACK);

    let axis = "Wavelength (A)";
    let w = font::text_width(axis, 2) as i64;
    canvas.text((left + right - w) / 2, bottom + 36, axis, 2, BLACK);
    canvas.text(8, top - 22, "Flux", 2, BLACK);

    if let Some(label) = label {
        let w = font::text_width(label, 2) as i64;
        canvas.text(((left + right - w) / 2).max(0), 12, label, 2, BLACK);
    }

    let clip_x = |x: f64| x.clamp(left as f64, right as f64).round() as i64;
    let clip_y = |y: f64| y.clamp(top as f64, bottom as f64).round() as i64;
    let points: Vec<(i64, i64)> = spec
        .wavelength()
        .iter()
        .zip(spec.flux())
        .map(|(&l, &f)| (clip_x(to_px(l)), clip_y(to_py(f))))
        .collect();
    match points.as_slice() {
        [] => {}
        [p] => {
            // lone sample: small cross so it stays visible
            canvas.hline(p.0 - 2, p.0 + 2, p.1, TRACE);
            canvas.vline(p.0, p.1 - 2, p.1 + 2, TRACE);
        }
        pts => {
            for pair in pts.windows(2) {
                canvas.line(pair[0], pair[1], TRACE);
            }
        }
    }

    canvas.encode()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(300.0, 8), 50.0);
        assert_eq!(nice_step(5000.0, 8), 1000.0);
        assert_eq!(nice_step(1.0, 6), 0.2);
        assert_eq!(decimals_for(0.2), 1);
        assert_eq!(decimals_for(50.0), 0);
        assert_eq!(decimals_for(0.05), 2);
    }

    #[test]
    fn ticks_stay_inside() {
        let (t, _) = ticks(6400.0, 6700.0, 8);
        assert_eq!(t.first(), Some(&6400.0));
        assert_eq!(t.last(), Some(&6700.0));
        assert!(t.iter().all(|v| (6400.0..=6700.0).contains(v)));
    }

    #[test]
    fn constant_flux_limits() {
        assert_eq!(flux_limits(&[0.0, 0.0]), (-1.0, 1.0));
        assert_eq!(flux_limits(&[5.0]), (4.5, 5.5));
    }
}
