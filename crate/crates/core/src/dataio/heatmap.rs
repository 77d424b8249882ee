//! Raster heatmaps of grid fields.
//!
//! Time runs left to right, space bottom to top (cell 0 is the bottom pixel
//! row). Colors follow a nine-stop viridis ramp, linearly interpolated; low
//! values are dark purple and high values yellow, and luminance increases
//! monotonically with the value. Output is binary PPM (`P6`) unless the path
//! ends in `.png`. The color range is written next to the image as
//! `<image>.range.txt`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::grid::GridField;
use crate::error::{Error, Result};

const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Maps `s` in [0, 1] (clamped) onto the ramp.
pub fn colormap(s: f64) -> [u8; 3] {
    let s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
    let pos = s * (VIRIDIS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    std::array::from_fn(|c| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapOptions {
    /// Color scale `(low, high)`; the field's own range when `None`.
    pub bounds: Option<(f64, f64)>,
    /// Integer pixel replication factor.
    pub scale: usize,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        Self {
            bounds: None,
            scale: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples, top row first.
    pub pixels: Vec<[u8; 3]>,
    pub bounds: (f64, f64),
}

impl Raster {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

pub fn rasterize(field: &GridField, opts: &HeatmapOptions) -> Result<Raster> {
    let (lo, hi) = opts
        .bounds
        .unwrap_or((field.values.min(), field.values.max()));
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::InvalidArgument(format!("bad color bounds ({lo}, {hi})")));
    }
    if opts.scale == 0 {
        return Err(Error::InvalidArgument("heatmap scale must be >= 1".into()));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (m, t) = field.values.shape();
    let sc = opts.scale;
    let (width, height) = (t * sc, m * sc);
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let i = m - 1 - y / sc;
        for x in 0..width {
            let j = x / sc;
            pixels.push(colormap((field.values.get(i, j) - lo) / span));
        }
    }
    Ok(Raster {
        width,
        height,
        pixels,
        bounds: (lo, hi),
    })
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".range.txt");
    PathBuf::from(s)
}

fn write_ppm(raster: &Raster, w: &mut impl Write) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", raster.width, raster.height)?;
    for p in &raster.pixels {
        w.write_all(p)?;
    }
    Ok(())
}

fn write_png(raster: &Raster, w: impl Write) -> std::result::Result<(), png::EncodingError> {
    let mut enc = png::Encoder::new(w, raster.width as u32, raster.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    let data: Vec<u8> = raster.pixels.iter().flatten().copied().collect();
    writer.write_image_data(&data)?;
    writer.finish()
}

/// Writes the image and its `.range.txt` sidecar; returns the raster.
pub fn render_heatmap(field: &GridField, path: impl AsRef<Path>, opts: &HeatmapOptions) -> Result<Raster> {
    let path = path.as_ref();
    let raster = rasterize(field, opts)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        write_png(&raster, &mut w)
            .map_err(|e| Error::io(path.display(), std::io::Error::other(e)))?;
    } else {
        write_ppm(&raster, &mut w).map_err(|e| Error::io(path.display(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display(), e))?;

    let side = sidecar_path(path);
    let text = format!(
        "min={}\nmax={}\ncolormap=viridis\nx_axis=time ({} steps, dt={} s)\ny_axis=space ({} cells, dx={} m, cell 0 at bottom)\n",
        raster.bounds.0,
        raster.bounds.1,
        field.t(),
        field.dt,
        field.m(),
        field.dx
    );
    fs::write(&side, text).map_err(|e| Error::io(side.display(), e))?;
    Ok(raster)
}
