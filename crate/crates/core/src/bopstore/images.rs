use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{io_err, BopError};

/// Millimetres per stored depth unit.
pub const DEPTH_SCALE: f64 = 0.1;

/// 8-bit interleaved RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width as usize + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

fn image_err(path: &Path, msg: impl ToString) -> BopError {
    BopError::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<(), BopError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut buf), width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().map_err(|e| image_err(path, e))?;
        w.write_image_data(data).map_err(|e| image_err(path, e))?;
    }
    super::write_atomic(path, &buf)
}

fn read_png(path: &Path, color: png::ColorType, depth: png::BitDepth) -> Result<(u32, u32, Vec<u8>), BopError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| image_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    if info.color_type != color || info.bit_depth != depth {
        return Err(image_err(path, format!("expected {color:?}/{depth:?}, found {:?}/{:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<(), BopError> {
    write_png(path, img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &img.data)
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage, BopError> {
    let (width, height, data) = read_png(path, png::ColorType::Rgb, png::BitDepth::Eight)?;
    Ok(RgbImage { width, height, data })
}

/// Depth in mm (0 or non-finite = no measurement) stored as 16-bit units of
/// [`DEPTH_SCALE`] mm.
pub fn write_depth_png(path: &Path, width: u32, height: u32, depth_mm: &[f64]) -> Result<(), BopError> {
    let mut bytes = Vec::with_capacity(depth_mm.len() * 2);
    for &d in depth_mm {
        let v = if d.is_finite() && d > 0.0 { (d / DEPTH_SCALE).round() } else { 0.0 };
        if v > u16::MAX as f64 {
            return Err(image_err(path, format!("depth {d} mm exceeds the 16-bit range")));
        }
        bytes.extend_from_slice(&(v as u16).to_be_bytes());
    }
    write_png(path, width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

/// Depth in mm; missing measurements read back as 0.
pub fn read_depth_png(path: &Path) -> Result<(u32, u32, Vec<f64>), BopError> {
    let (w, h, bytes) = read_png(path, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let depth = bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * DEPTH_SCALE).collect();
    Ok((w, h, depth))
}
