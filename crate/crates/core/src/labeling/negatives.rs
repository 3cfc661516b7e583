use image::DynamicImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabelingError;
use crate::geometry::BoundingBox;

pub const ATTEMPTS_PER_CROP: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeCrops {
    pub boxes: Vec<BoundingBox>,
    pub crops: Vec<DynamicImage>,
    /// Set when fewer than the requested number of crops could be placed.
    pub exhausted: bool,
}

/// Random background crops that share no area with any positive box.
pub fn mine_negatives(
    image: &DynamicImage,
    positives: &[BoundingBox],
    count: usize,
    crop_size: (u32, u32),
    seed: u64,
) -> Result<NegativeCrops, LabelingError> {
    let (w, h) = (image.width(), image.height());
    let (cw, ch) = crop_size;
    if cw == 0 || ch == 0 || cw > w || ch > h {
        return Err(LabelingError::CropTooLarge {
            crop_w: cw,
            crop_h: ch,
            width: w,
            height: h,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes = Vec::new();
    let mut exhausted = false;
    'crops: for _ in 0..count {
        for _ in 0..ATTEMPTS_PER_CROP {
            let x = rng.random_range(0..=w - cw) as i32;
            let y = rng.random_range(0..=h - ch) as i32;
            let candidate = BoundingBox::new(x, y, x + cw as i32, y + ch as i32);
            if positives.iter().all(|p| !p.overlaps(&candidate)) {
                boxes.push(candidate);
                continue 'crops;
            }
        }
        exhausted = true;
        break;
    }
    if exhausted {
        log::warn!(
            "placed {} of {count} negative crops before running out of background",
            boxes.len()
        );
    }
    let crops = boxes
        .iter()
        .map(|b| image.crop_imm(b.x_min as u32, b.y_min as u32, cw, ch))
        .collect();
    Ok(NegativeCrops {
        boxes,
        crops,
        exhausted,
    })
}
