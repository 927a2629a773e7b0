//! Deterministic grayscale rasterization of normalized two-column tables.
//!
//! Images are white-on-black intensity grids without axes or labels.
//! `x` maps to column `round(x * (W - 1))` and `y` to row
//! `round((1 - y) * (H - 1))`, so the origin sits at the bottom left.

use std::collections::BTreeMap;
use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{DataTable, PlotType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Scatter and line marker radius in pixels.
    pub marker_radius: f64,
    pub line_thickness: usize,
    /// Side length of the square density histogram.
    pub density_bins: usize,
    /// Gaussian blur std, in bins.
    pub density_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 64,
            height: 64,
            marker_radius: 1.5,
            line_thickness: 1,
            density_bins: 32,
            density_sigma: 1.5,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidRenderConfig(msg));
        if self.width < 16 || self.height < 16 {
            return bad(format!("image must be at least 16x16, got {}x{}", self.width, self.height));
        }
        if self.density_bins == 0
            || self.width % self.density_bins != 0
            || self.height % self.density_bins != 0
        {
            return bad(format!(
                "density_bins {} must divide {}x{}",
                self.density_bins, self.width, self.height
            ));
        }
        if !(self.marker_radius >= 0.0 && self.marker_radius.is_finite()) {
            return bad(format!("marker_radius {} must be >= 0", self.marker_radius));
        }
        if self.line_thickness == 0 {
            return bad("line_thickness must be >= 1".into());
        }
        if !(self.density_sigma > 0.0 && self.density_sigma.is_finite()) {
            return bad(format!("density_sigma {} must be > 0", self.density_sigma));
        }
        Ok(())
    }
}

/// Row-major intensity grid in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub plot_type: PlotType,
    pub table_id: String,
}

impl PlotImage {
    pub fn blank(width: usize, height: usize, plot_type: PlotType, table_id: &str) -> Self {
        PlotImage {
            width,
            height,
            pixels: vec![0.0; width * height],
            plot_type,
            table_id: table_id.to_string(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// Identifier used for image files and URLs: `{table_id}-{plot_type}`.
    pub fn image_id(&self) -> String {
        image_id(&self.table_id, self.plot_type)
    }

    /// Total intensity.
    pub fn ink(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum()
    }

    fn quantized(&self) -> impl Iterator<Item = u8> + '_ {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.quantized());
        out
    }

    /// Lossless 8-bit grayscale PNG with the same quantization as PGM.
    pub fn to_png(&self) -> Vec<u8> {
        let buf = image::GrayImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.quantized().collect(),
        )
        .expect("pixel buffer matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory png encode");
        out.into_inner()
    }
}

pub fn image_id(table_id: &str, plot_type: PlotType) -> String {
    format!("{table_id}-{plot_type}")
}

/// Renders one chart of a normalized two-column table.
pub fn render(t: &DataTable, plot_type: PlotType, cfg: &RenderConfig) -> Result<PlotImage> {
    cfg.validate()?;
    if t.num_columns() != 2 {
        return Err(Error::WrongArity {
            found: t.num_columns(),
        });
    }
    for c in t.columns() {
        if let Some(&v) = c.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::NotNormalized {
                column: c.name.clone(),
                value: v,
            });
        }
    }
    let xs = &t.columns()[0].values;
    let ys = &t.columns()[1].values;
    let mut img = PlotImage::blank(cfg.width, cfg.height, plot_type, &t.id);
    match plot_type {
        PlotType::Scatter => {
            let stamp = disk(cfg.marker_radius);
            for (&x, &y) in xs.iter().zip(ys) {
                let (c, r) = to_pixel(x, y, cfg);
                paint(&mut img, c, r, &stamp);
            }
        }
        PlotType::Line => {
            let pen = disk((cfg.line_thickness as f64 - 1.0) / 2.0);
            let marker = disk(cfg.marker_radius);
            let pts: Vec<(i64, i64)> = xs.iter().zip(ys).map(|(&x, &y)| to_pixel(x, y, cfg)).collect();
            for w in pts.windows(2) {
                for (c, r) in bresenham(w[0], w[1]) {
                    paint(&mut img, c, r, &pen);
                }
            }
            for &(c, r) in &pts {
                paint(&mut img, c, r, &marker);
            }
        }
        PlotType::Density => density(&mut img, xs, ys, cfg),
    }
    Ok(img)
}

/// Renders all three candidate charts.
pub fn render_candidates(t: &DataTable, cfg: &RenderConfig) -> Result<BTreeMap<PlotType, PlotImage>> {
    PlotType::ALL
        .iter()
        .map(|&p| Ok((p, render(t, p, cfg)?)))
        .collect()
}

fn to_pixel(x: f64, y: f64, cfg: &RenderConfig) -> (i64, i64) {
    let c = (x * (cfg.width - 1) as f64).round() as i64;
    let r = ((1.0 - y) * (cfg.height - 1) as f64).round() as i64;
    (c, r)
}

/// Pixel offsets within `radius` of the center.
fn disk(radius: f64) -> Vec<(i64, i64)> {
    let reach = radius.floor() as i64;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn paint(img: &mut PlotImage, c: i64, r: i64, stamp: &[(i64, i64)]) {
    let (w, h) = (img.width as i64, img.height as i64);
    for &(dx, dy) in stamp {
        let (x, y) = (c + dx, r + dy);
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.pixels[(y * w + x) as usize] = 1.0;
        }
    }
}

/// Integer line rasterization including both endpoints.
fn bresenham((x0, y0): (i64, i64), (x1, y1): (i64, i64)) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            return out;
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

fn density(img: &mut PlotImage, xs: &[f64], ys: &[f64], cfg: &RenderConfig) {
    let bins = cfg.density_bins;
    let bin = |v: f64| ((v * bins as f64).floor() as usize).min(bins - 1);
    let mut hist = vec![0.0f64; bins * bins];
    for (&x, &y) in xs.iter().zip(ys) {
        hist[bin(1.0 - y) * bins + bin(x)] += 1.0;
    }

    let radius = (3.0 * cfg.density_sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * cfg.density_sigma * cfg.density_sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    // separable blur, zero outside the grid
    let blur = |src: &[f64], horizontal: bool| {
        let mut dst = vec![0.0; bins * bins];
        for r in 0..bins {
            for c in 0..bins {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let off = k as i64 - radius;
                    let (rr, cc) = if horizontal {
                        (r as i64, c as i64 + off)
                    } else {
                        (r as i64 + off, c as i64)
                    };
                    if (0..bins as i64).contains(&rr) && (0..bins as i64).contains(&cc) {
                        acc += w * src[rr as usize * bins + cc as usize];
                    }
                }
                dst[r * bins + c] = acc;
            }
        }
        dst
    };
    let smooth = blur(&blur(&hist, true), false);

    // bilinear upsample, sampling at pixel centers
    let sample_axis = |p: usize, pixels: usize| {
        let u = ((p as f64 + 0.5) * bins as f64 / pixels as f64 - 0.5).clamp(0.0, (bins - 1) as f64);
        let i0 = u.floor() as usize;
        let i1 = (i0 + 1).min(bins - 1);
        (i0, i1, u - i0 as f64)
    };
    let mut up = vec![0.0f64; img.width * img.height];
    for py in 0..img.height {
        let (r0, r1, fr) = sample_axis(py, img.height);
        for px in 0..img.width {
            let (c0, c1, fc) = sample_axis(px, img.width);
            let top = smooth[r0 * bins + c0] * (1.0 - fc) + smooth[r0 * bins + c1] * fc;
            let bottom = smooth[r1 * bins + c0] * (1.0 - fc) + smooth[r1 * bins + c1] * fc;
            up[py * img.width + px] = top * (1.0 - fr) + bottom * fr;
        }
    }
    let max = up.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for (dst, v) in img.pixels.iter_mut().zip(&up) {
            *dst = (v / max).clamp(0.0, 1.0) as f32;
        }
    }
}
