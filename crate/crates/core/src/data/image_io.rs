//! 8-bit grayscale PNG storage; values map to [0,1] by `/255` on read.

use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Image(e.to_string()))?;
        w.write_image_data(pixels)
            .map_err(|e| Error::Image(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes any PNG to luminance bytes, returning `(width, height, pixels)`.
pub fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Image("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Image(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let row = info.line_size;
    let mut out = Vec::with_capacity(w * h);
    for i in 0..h {
        let line = &buf[i * row..i * row + w * channels];
        for px in line.chunks_exact(channels) {
            out.push(match channels {
                1 | 2 => px[0],
                _ => ((px[0] as u32 + px[1] as u32 + px[2] as u32 + 1) / 3) as u8,
            });
        }
    }
    Ok((w, h, out))
}

pub fn write_grid_png(path: &Path, g: &Grid) -> Result<()> {
    let bytes: Vec<u8> = g.data().iter().map(|&v| to_u8(v)).collect();
    write_gray_png(path, g.side(), g.side(), &bytes)
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bytes = encode_png(width, height, pixels)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid_png(path: &Path) -> Result<Grid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, px) = decode_png(&bytes)?;
    if w != h {
        return Err(Error::ShapeMismatch(format!(
            "{} is {w}x{h}, expected a square image",
            path.display()
        )));
    }
    Grid::new(w, px.iter().map(|&b| b as f64 / 255.0).collect())
}
