//! Superpixel segmentation with grid-seeded recurrent clustering over
//! Lab and position features, plus a SLIC baseline and the ASA/CO metrics.

mod color;
mod image_io;
mod labels;
mod metrics;
mod pipeline;
mod slic;
pub mod synthetic;

pub use color::{rgb_to_lab, srgb_to_lab};
pub use image_io::{
    decode_image, decode_png, encode_label_pgm, encode_png, encode_ppm, load_image, load_label_pgm, overlay,
    parse_label_pgm, parse_ppm, save_image, save_label_pgm, save_overlay, RgbImage, BOUNDARY_COLOR,
};
pub use labels::{enforce_connectivity, LabelMap};
pub use metrics::{areas_and_perimeters, asa, compactness};
pub use pipeline::{
    build_pixel_features, grid_interval, seed_voronoi, segment_features, segment_superpixels, Segmentation,
    SuperpixelConfig, SuperpixelMetrics,
};
pub use slic::{slic_baseline, slic_with_connectivity};
