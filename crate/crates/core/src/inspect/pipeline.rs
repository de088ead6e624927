use std::path::{Path, PathBuf};

use image::RgbImage;

use super::kmedoids::{kmedoids, MedoidSelection, DEFAULT_K, DEFAULT_MAX_ITERS};
use super::maps::{extract_maps, AssignmentMaps};
use super::render::{render, RenderOptions};
use crate::error::{Error, Result};
use crate::glnet::{ForwardOptions, GlNetModel};
use crate::tensor::{no_grad, Element, Tensor};

/// `[1, C, H, W]` model input from 8-bit pixels, mapped to `[-1, 1]`.
/// One channel takes the mean of R, G and B.
pub fn image_to_tensor<T: Element>(img: &RgbImage, channels: usize) -> Result<Tensor<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = |v: f64| v / 127.5 - 1.0;
    let data: Vec<f64> = match channels {
        1 => img
            .pixels()
            .map(|p| scale(p.0.iter().map(|&c| c as f64).sum::<f64>() / 3.0))
            .collect(),
        3 => (0..3)
            .flat_map(|c| img.pixels().map(move |p| scale(p[c] as f64)))
            .collect(),
        _ => {
            return Err(Error::invalid(
                "image_to_tensor",
                format!("{channels} channels unsupported"),
            ))
        }
    };
    Tensor::from_f64(&[1, channels, h, w], &data)
}

/// Inverse of [`image_to_tensor`] for batch element `sample`; values are
/// clamped to `[-1, 1]` first.
pub fn tensor_to_image<T: Element>(t: &Tensor<T>, sample: usize) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 4 || !(s[1] == 1 || s[1] == 3) || sample >= s[0] {
        return Err(Error::invalid(
            "tensor_to_image",
            format!("cannot render sample {sample} of {s:?}"),
        ));
    }
    let (c, h, w) = (s[1], s[2], s[3]);
    let v = t.to_f64_vec();
    let base = sample * c * h * w;
    let px = |ch: usize, i: usize| {
        ((v[base + ch * h * w + i].clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
    };
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb(std::array::from_fn(|k| px(if c == 3 { k } else { 0 }, i)))
    }))
}

#[derive(Debug, Clone)]
pub struct VisualizeOptions {
    /// Global block index; `None` picks the first block of the third stage.
    pub block: Option<usize>,
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub render: RenderOptions,
}

impl Default for VisualizeOptions {
    fn default() -> Self {
        VisualizeOptions {
            block: None,
            k: DEFAULT_K,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
            render: RenderOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Visualization {
    pub maps: AssignmentMaps,
    pub selection: MedoidSelection,
    pub files: Vec<PathBuf>,
}

/// Forward pass on one image, then extract, select and render.
pub fn visualize<T: Element>(
    model: &GlNetModel<T>,
    img: &RgbImage,
    image_id: &str,
    out_dir: &Path,
    opts: &VisualizeOptions,
) -> Result<Visualization> {
    let block = opts
        .block
        .unwrap_or_else(|| model.net.default_visual_block());
    let input = image_to_tensor::<T>(img, model.spec().in_channels)?;
    let out = {
        let _g = no_grad();
        model.forward(
            &input,
            ForwardOptions {
                collect_states: true,
                ..Default::default()
            },
        )?
    };
    let maps = extract_maps(&out.states, block, 0, image_id)?;
    let selection = kmedoids(&maps, opts.k, opts.max_iters, opts.seed)?;
    let files = render(&maps, &selection, Some(img), out_dir, &opts.render)?;
    Ok(Visualization {
        maps,
        selection,
        files,
    })
}
