//! δ(t) decay curves as a PNG line chart.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use sal360_core::center_bias::{delta, half_decay_frame};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;
const PALETTE: [[u8; 3]; 6] = [
    [200, 40, 40],
    [40, 90, 200],
    [30, 150, 60],
    [200, 130, 20],
    [130, 50, 170],
    [20, 150, 160],
];

/// One curve: its α and its first frame with δ ≤ 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCurve {
    pub alpha: f64,
    pub crossing: u64,
}

pub fn decay_curves(alphas: &[f64], c_const: f64) -> Vec<DecayCurve> {
    alphas
        .iter()
        .map(|&alpha| DecayCurve {
            alpha,
            crossing: half_decay_frame(alpha, c_const),
        })
        .collect()
}

/// Frames shown on the x axis: three times the latest crossing, at least 30.
pub fn frame_span(curves: &[DecayCurve]) -> u64 {
    curves.iter().map(|c| 3 * c.crossing).max().unwrap_or(0).max(30)
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if (0..WIDTH as i64).contains(&x) && (0..HEIGHT as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Renders δ(t) for each curve with a dashed line at δ = 0.5 and a tick at
/// each crossing frame.
pub fn render_decay(curves: &[DecayCurve], c_const: f64) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let span = frame_span(curves) as f64;
    let (left, right) = (MARGIN as f64, (WIDTH - MARGIN / 2) as f64);
    let (top, bottom) = ((MARGIN / 2) as f64, (HEIGHT - MARGIN) as f64);
    let px = |t: f64| (left + (right - left) * t / span).round() as i64;
    let py = |v: f64| (bottom - (bottom - top) * v).round() as i64;
    let axis = Rgb([0, 0, 0]);
    line(&mut img, (px(0.0), py(0.0)), (px(span), py(0.0)), axis);
    line(&mut img, (px(0.0), py(0.0)), (px(0.0), py(1.0)), axis);
    for i in 0..=10 {
        let t = span * i as f64 / 10.0;
        line(&mut img, (px(t), py(0.0)), (px(t), py(0.0) + 4), axis);
        let v = i as f64 / 10.0;
        line(&mut img, (px(0.0) - 4, py(v)), (px(0.0), py(v)), axis);
    }
    let grey = Rgb([150, 150, 150]);
    let mut x = px(0.0);
    while x < px(span) {
        line(&mut img, (x, py(0.5)), ((x + 5).min(px(span)), py(0.5)), grey);
        x += 10;
    }
    for (i, c) in curves.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        let steps = (right - left) as usize;
        let mut prev = (px(0.0), py(delta(0.0, c.alpha, c_const)));
        for s in 1..=steps {
            let t = span * s as f64 / steps as f64;
            let p = (px(t), py(delta(t, c.alpha, c_const)));
            line(&mut img, prev, p, color);
            prev = p;
        }
        let xc = px(c.crossing as f64);
        line(&mut img, (xc, py(0.0)), (xc, py(0.5)), color);
    }
    img
}

pub fn save_decay_png(path: &Path, curves: &[DecayCurve], c_const: f64) -> Result<()> {
    render_decay(curves, c_const)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}
