use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::imageops::{self, FilterType};
use image::{ExtendedColorType, ImageBuffer, ImageEncoder, ImageFormat, Luma, RgbImage};

use super::colormap::VIRIDIS;
use super::kmedoids::MedoidSelection;
use super::maps::AssignmentMaps;
use crate::error::{Error, Result};
use crate::glmix::slot_grid_side;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Min-max rescale every map before coloring.
    pub normalize: bool,
    /// Weight of the map color over the input image.
    pub alpha: f32,
    /// Upscaling of representative maps when no input image is given.
    pub scale: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            normalize: true,
            alpha: 0.6,
            scale: 8,
        }
    }
}

fn image_err(e: image::ImageError) -> Error {
    Error::Image(e.to_string())
}

/// Ramp color of `v`, clamped to `[0, 1]`.
pub fn colorize(v: f64) -> [u8; 3] {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    VIRIDIS[(v * 255.0).round() as usize]
}

fn display(maps: &AssignmentMaps, opts: &RenderOptions) -> AssignmentMaps {
    if opts.normalize {
        maps.min_max_normalized()
    } else {
        maps.clone()
    }
}

/// All maps tiled on a `√M × √M` grid, slot `m` at row `m / √M`.
/// The image is `√M·W` wide and `√M·H` tall.
pub fn render_mosaic(maps: &AssignmentMaps, opts: &RenderOptions) -> Result<RgbImage> {
    let side = slot_grid_side(maps.num_slots())?;
    let maps = display(maps, opts);
    let (h, w) = (maps.height, maps.width);
    let mut img = RgbImage::new((side * w) as u32, (side * h) as u32);
    for (m, map) in maps.maps.iter().enumerate() {
        let (ty, tx) = (m / side, m % side);
        for y in 0..h {
            for x in 0..w {
                let px = colorize(map[y * w + x]);
                img.put_pixel((tx * w + x) as u32, (ty * h + y) as u32, image::Rgb(px));
            }
        }
    }
    Ok(img)
}

/// One map, bilinearly enlarged and colored, blended over `background`
/// (resized to match) when given.
pub fn render_slot(
    maps: &AssignmentMaps,
    slot: usize,
    background: Option<&RgbImage>,
    opts: &RenderOptions,
) -> Result<RgbImage> {
    if slot >= maps.num_slots() {
        return Err(Error::invalid(
            "render",
            format!("slot {slot} out of range for {} maps", maps.num_slots()),
        ));
    }
    let maps = display(maps, opts);
    let (h, w) = (maps.height as u32, maps.width as u32);
    let (tw, th) = match background {
        Some(bg) => bg.dimensions(),
        None => (w * opts.scale.max(1), h * opts.scale.max(1)),
    };
    let values: Vec<f32> = maps.maps[slot].iter().map(|&v| v as f32).collect();
    let small: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_raw(w, h, values)
        .ok_or_else(|| Error::Image("map buffer size".into()))?;
    let large = imageops::resize(&small, tw, th, FilterType::Triangle);
    let mut out = RgbImage::new(tw, th);
    for (x, y, p) in out.enumerate_pixels_mut() {
        let c = colorize(large.get_pixel(x, y)[0] as f64);
        *p = match background {
            Some(bg) => {
                let b = bg.get_pixel(x, y);
                let a = opts.alpha.clamp(0.0, 1.0);
                image::Rgb(std::array::from_fn(|i| {
                    (a * c[i] as f32 + (1.0 - a) * b[i] as f32)
                        .round()
                        .clamp(0.0, 255.0) as u8
                }))
            }
            None => image::Rgb(c),
        };
    }
    Ok(out)
}

/// Binary PPM (P6, maxval 255) bytes.
pub fn encode_ppm(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            ExtendedColorType::Rgb8,
        )
        .map_err(image_err)?;
    Ok(buf)
}

/// Parses PPM or PGM bytes; gray images are expanded to RGB.
pub fn decode_pnm(bytes: &[u8]) -> Result<RgbImage> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(image_err)?
        .to_rgb8())
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    fs::write(path, encode_ppm(img)?)?;
    Ok(())
}

pub fn read_pnm(path: &Path) -> Result<RgbImage> {
    decode_pnm(&fs::read(path)?)
}

/// `<image-id>_blk<idx>_slot<m>.ppm`
pub fn slot_file_name(image_id: &str, block: usize, slot: usize) -> String {
    format!("{image_id}_blk{block}_slot{slot}.ppm")
}

/// `<image-id>_blk<idx>_mosaic.ppm`
pub fn mosaic_file_name(image_id: &str, block: usize) -> String {
    format!("{image_id}_blk{block}_mosaic.ppm")
}

/// Writes the mosaic and one overlay per selected medoid into `out_dir`
/// and returns the paths, mosaic first.
pub fn render(
    maps: &AssignmentMaps,
    selection: &MedoidSelection,
    input: Option<&RgbImage>,
    out_dir: &Path,
    opts: &RenderOptions,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(selection.medoids.len() + 1);
    let path = out_dir.join(mosaic_file_name(&maps.image_id, maps.block));
    write_ppm(&path, &render_mosaic(maps, opts)?)?;
    paths.push(path);
    for &slot in &selection.medoids {
        let path = out_dir.join(slot_file_name(&maps.image_id, maps.block, slot));
        write_ppm(&path, &render_slot(maps, slot, input, opts)?)?;
        paths.push(path);
    }
    Ok(paths)
}
