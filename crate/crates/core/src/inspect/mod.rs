//! Slot assignment maps: extraction from clustering states, representative
//! slot selection by k-medoids and pseudo-colored PPM rendering.

mod colormap;
mod kmedoids;
mod maps;
mod pipeline;
mod render;

pub use colormap::VIRIDIS;
pub use kmedoids::{
    kmedoids, kmedoids_exhaustive, kmedoids_points, normalized_rows, MedoidSelection, DEFAULT_K,
    DEFAULT_MAX_ITERS, RESTARTS,
};
pub use maps::{extract_maps, AssignmentMaps};
pub use pipeline::{image_to_tensor, tensor_to_image, visualize, Visualization, VisualizeOptions};
pub use render::{
    colorize, decode_pnm, encode_ppm, mosaic_file_name, read_pnm, render, render_mosaic,
    render_slot, slot_file_name, write_ppm, RenderOptions,
};
