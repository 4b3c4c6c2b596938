//! Grid-of-rectangles SVG heatmaps with a blue–white–red diverging colormap.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const LOW_COLOR: (u8, u8, u8) = (0x3B, 0x4C, 0xC0);
pub const MID_COLOR: (u8, u8, u8) = (0xF7, 0xF7, 0xF7);
pub const HIGH_COLOR: (u8, u8, u8) = (0xB4, 0x04, 0x26);
const MISSING_COLOR: &str = "#D0D0D0";

const CELL: usize = 24;
const LABEL_SPACE: usize = 140;
const TITLE_SPACE: usize = 30;
const LEGEND_SPACE: usize = 50;

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

/// Piecewise-linear map: `vmin` → blue, midpoint → white, `vmax` → red.
/// Values outside the range are clamped.
pub fn diverging_color(value: f64, vmin: f64, vmax: f64) -> (u8, u8, u8) {
    let t = ((value - vmin) / (vmax - vmin)).clamp(0.0, 1.0);
    let (from, to, u) = if t <= 0.5 {
        (LOW_COLOR, MID_COLOR, t / 0.5)
    } else {
        (MID_COLOR, HIGH_COLOR, (t - 0.5) / 0.5)
    };
    (
        lerp(from.0, to.0, u),
        lerp(from.1, to.1, u),
        lerp(from.2, to.2, u),
    )
}

pub fn hex_color((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02X}{g:02X}{b:02X}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major; `None` cells are drawn grey.
    pub values: Vec<Option<f64>>,
    pub vmin: f64,
    pub vmax: f64,
}

impl Heatmap {
    pub fn render(&self) -> Result<String> {
        if !(self.vmin < self.vmax) {
            return Err(Error::InvalidArgument(format!(
                "heatmap needs vmin < vmax, got {} and {}",
                self.vmin, self.vmax
            )));
        }
        let (rows, cols) = (self.row_labels.len(), self.col_labels.len());
        if self.values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "heatmap with {rows}x{cols} labels got {} values",
                self.values.len()
            )));
        }
        let width = LABEL_SPACE + cols * CELL + 10;
        let height = TITLE_SPACE + LABEL_SPACE + rows * CELL + LEGEND_SPACE;
        let (x0, y0) = (LABEL_SPACE, TITLE_SPACE + LABEL_SPACE);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="18" font-size="14" text-anchor="middle">{}</text>"#,
            width / 2,
            escape(&self.title)
        );
        for (j, label) in self.col_labels.iter().enumerate() {
            let x = x0 + j * CELL + CELL / 2;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})" text-anchor="start">{}</text>"#,
                y0 - 4,
                y0 - 4,
                escape(label)
            );
        }
        for (i, label) in self.row_labels.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                x0 - 4,
                y0 + i * CELL + CELL / 2 + 3,
                escape(label)
            );
        }
        for i in 0..rows {
            for j in 0..cols {
                let (fill, tip) = match self.values[i * cols + j] {
                    Some(v) => (
                        hex_color(diverging_color(v, self.vmin, self.vmax)),
                        format!("{v:.4}"),
                    ),
                    None => (MISSING_COLOR.to_string(), "n/a".to_string()),
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"><title>{} / {}: {tip}</title></rect>"#,
                    x0 + j * CELL,
                    y0 + i * CELL,
                    escape(&self.row_labels[i]),
                    escape(&self.col_labels[j]),
                );
            }
        }
        // colour bar
        let bar_y = y0 + rows * CELL + 15;
        let steps = 20;
        let bar_w = (cols * CELL).max(steps * 4);
        for k in 0..steps {
            let v = self.vmin + (self.vmax - self.vmin) * (k as f64 + 0.5) / steps as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{bar_y}" width="{}" height="10" fill="{}"/>"#,
                x0 + k * bar_w / steps,
                bar_w / steps + 1,
                hex_color(diverging_color(v, self.vmin, self.vmax))
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{x0}" y="{}" text-anchor="start">{:.2}</text>"#,
            bar_y + 24,
            self.vmin
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#,
            x0 + bar_w,
            bar_y + 24,
            self.vmax
        );
        s.push_str("</svg>\n");
        Ok(s)
    }
}
