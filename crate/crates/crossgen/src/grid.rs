//! Image grids as 8-bit grayscale PNGs: row-major layout with 2-pixel
//! white separators between tiles, the usual way generated-vs-real sheets
//! are presented.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crossgen_core::tensor::Tensor;

use crate::error::{Error, Result};

const SEPARATOR: usize = 2;
const SEPARATOR_SHADE: u8 = 255;

/// Lays `images` ([N,1,H,W], values in [0,1]) out as a grid with `cols`
/// columns and writes it to `path`. The last row may be ragged; missing
/// cells stay separator-colored.
pub fn emit_image_grid(images: &Tensor<f32>, cols: usize, path: &Path) -> Result<()> {
    let shape = images.shape();
    if shape.len() != 4 || shape[1] != 1 || shape[0] == 0 {
        return Err(Error::invalid(format!(
            "grid wants non-empty [N,1,H,W] images, got {shape:?}"
        )));
    }
    if cols == 0 {
        return Err(Error::invalid("grid needs at least one column"));
    }
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let width = cols * w + (cols - 1) * SEPARATOR;
    let height = rows * h + (rows - 1) * SEPARATOR;

    let mut canvas = vec![SEPARATOR_SHADE; width * height];
    for (i, tile) in images.data().chunks_exact(h * w).enumerate() {
        let (r, c) = (i / cols, i % cols);
        let (y0, x0) = (r * (h + SEPARATOR), c * (w + SEPARATOR));
        for y in 0..h {
            for x in 0..w {
                let v = tile[y * w + x].clamp(0.0, 1.0);
                canvas[(y0 + y) * width + x0 + x] = (v * 255.0).round() as u8;
            }
        }
    }

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::invalid(format!("png header for {}: {e}", path.display())))?;
    writer
        .write_image_data(&canvas)
        .map_err(|e| Error::invalid(format!("png data for {}: {e}", path.display())))
}

/// Stacks two equally shaped image batches vertically — generated above
/// real — for the end-of-training comparison sheet.
pub fn stack_batches(top: &Tensor<f32>, bottom: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (a, b) = (top.shape(), bottom.shape());
    if a.len() != 4 || b.len() != 4 || a[1..] != b[1..] {
        return Err(Error::invalid(format!(
            "cannot stack image batches of shapes {a:?} and {b:?}"
        )));
    }
    let mut data = Vec::with_capacity(top.numel() + bottom.numel());
    data.extend_from_slice(top.data());
    data.extend_from_slice(bottom.data());
    Ok(Tensor::new(&[a[0] + b[0], a[1], a[2], a[3]], data)?)
}
