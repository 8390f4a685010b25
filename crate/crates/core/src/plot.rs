//! Minimal raster bar charts (PNG) with an 8x8 bitmap font.

use std::path::Path;

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// One bar per group, drawn in a shared colour.
#[derive(Clone, Debug)]
pub struct BarSeries {
    pub label: String,
    pub values: Vec<f64>,
    /// Error-bar half-heights; may be empty.
    pub errors: Vec<f64>,
}

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([200, 200, 200]);

struct Canvas(RgbImage);

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.0.width() && (y as u32) < self.0.height() {
            self.0.put_pixel(x as u32, y as u32, c);
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.put(x, y, c);
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb<u8>) {
        for (i, ch) in s.chars().enumerate() {
            let glyph = BASIC_FONTS.get(ch).or_else(|| BASIC_FONTS.get('?')).unwrap_or([0; 8]);
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..8 {
                    if bits >> col & 1 == 1 {
                        self.put(x + i as i64 * 8 + col, y + row as i64, c);
                    }
                }
            }
        }
    }
}

/// Draws a grouped bar chart on a `[0, y_max]` axis. Groups are numbered under the axis
/// and listed with their labels below the plot.
pub fn grouped_bar_chart(path: &Path, title: &str, groups: &[String], series: &[BarSeries], y_max: f64) -> Result<()> {
    if groups.is_empty() || series.is_empty() {
        return Err(Error::InvalidArgument("bar chart needs at least one group and one series".into()));
    }
    if series.iter().any(|s| s.values.len() != groups.len() || !(s.errors.is_empty() || s.errors.len() == groups.len())) {
        return Err(Error::Shape("every series needs one value (and error) per group".into()));
    }
    let bar_w = 18i64;
    let gap = 16i64;
    let group_w = bar_w * series.len() as i64 + gap;
    let (left, top, plot_h) = (56i64, 28i64, 240i64);
    let legend_rows = (groups.len() + series.len()) as i64;
    let longest = groups
        .iter()
        .map(|g| g.len() + 4)
        .chain(series.iter().map(|s| s.label.len() + 4))
        .chain(std::iter::once(title.len()))
        .max()
        .unwrap_or(0) as i64;
    let width = (left + group_w * groups.len() as i64 + 20).max(left + longest * 8 + 20);
    let height = top + plot_h + 24 + legend_rows * 12 + 12;
    let mut c = Canvas(RgbImage::from_pixel(width as u32, height as u32, Rgb([255, 255, 255])));

    c.text(left, 8, title, BLACK);
    let y_of = |v: f64| top + plot_h - ((v / y_max).clamp(0.0, 1.0) * plot_h as f64).round() as i64;
    for tick in 0..=4 {
        let v = y_max * tick as f64 / 4.0;
        let y = y_of(v);
        c.rect(left, y, width - 10, y, GREY);
        c.text(4, y - 4, &format!("{v:.2}"), BLACK);
    }
    for (g, _) in groups.iter().enumerate() {
        let x0 = left + gap / 2 + g as i64 * group_w;
        for (k, s) in series.iter().enumerate() {
            let v = s.values[g];
            if !v.is_finite() {
                continue;
            }
            let [r, gr, b] = PALETTE[k % PALETTE.len()];
            let x = x0 + k as i64 * bar_w;
            c.rect(x + 1, y_of(v), x + bar_w - 2, top + plot_h, Rgb([r, gr, b]));
            if let Some(&e) = s.errors.get(g) {
                if e.is_finite() && e > 0.0 {
                    let mid = x + bar_w / 2;
                    let (hi, lo) = (y_of(v + e), y_of(v - e));
                    c.rect(mid, hi, mid, lo, BLACK);
                    c.rect(mid - 3, hi, mid + 3, hi, BLACK);
                    c.rect(mid - 3, lo, mid + 3, lo, BLACK);
                }
            }
        }
        let label = (g + 1).to_string();
        let centre = x0 + (bar_w * series.len() as i64) / 2 - label.len() as i64 * 4;
        c.text(centre, top + plot_h + 6, &label, BLACK);
    }
    c.rect(left, top, left, top + plot_h, BLACK);
    c.rect(left, top + plot_h, width - 10, top + plot_h, BLACK);

    let mut y = top + plot_h + 24;
    for (g, label) in groups.iter().enumerate() {
        c.text(left, y, &format!("{}: {label}", g + 1), BLACK);
        y += 12;
    }
    if series.len() > 1 || !series[0].label.is_empty() {
        for (k, s) in series.iter().enumerate() {
            let [r, gr, b] = PALETTE[k % PALETTE.len()];
            c.rect(left, y, left + 7, y + 7, Rgb([r, gr, b]));
            c.text(left + 12, y, &s.label, BLACK);
            y += 12;
        }
    }
    c.0.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
