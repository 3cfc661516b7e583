use image::imageops::FilterType;
use image::{DynamicImage, GrayImage};

pub const DEDUPE_SIDE: u32 = 64;
pub const DEFAULT_DEDUPE_THRESHOLD: f64 = 4.0 / 255.0;

fn thumbnail(img: &DynamicImage) -> GrayImage {
    image::imageops::resize(&img.to_luma8(), DEDUPE_SIDE, DEDUPE_SIDE, FilterType::Triangle)
}

/// Mean absolute difference of 64×64 grayscale thumbnails, scaled to `[0, 1]`.
pub fn thumbnail_difference(a: &DynamicImage, b: &DynamicImage) -> f64 {
    mean_abs_diff(&thumbnail(a), &thumbnail(b))
}

fn mean_abs_diff(a: &GrayImage, b: &GrayImage) -> f64 {
    let total: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| f64::from(x.abs_diff(y)))
        .sum();
    total / (a.as_raw().len() as f64 * 255.0)
}

/// Indices of the images kept by a sequential scan: an image is kept when it
/// differs from the last kept image by more than `similarity_threshold`.
/// The first image is always kept.
pub fn dedupe_frames(images: &[DynamicImage], similarity_threshold: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut last: Option<GrayImage> = None;
    for (i, img) in images.iter().enumerate() {
        let thumb = thumbnail(img);
        let keep = match &last {
            None => true,
            Some(prev) => mean_abs_diff(prev, &thumb) > similarity_threshold,
        };
        if keep {
            kept.push(i);
            last = Some(thumb);
        }
    }
    kept
}
