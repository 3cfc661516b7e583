use std::str::FromStr;

use image::imageops::FilterType;
use image::{DynamicImage, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabelingError;
use crate::geometry::BoundingBox;

/// An image with its labeled boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: DynamicImage,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Hflip,
    /// Quarter turn clockwise.
    Rotate90,
    ColorJitter { seed: u64 },
    /// Seeded anisotropic rescale.
    Distort { seed: u64 },
}

impl FromStr for AugmentOp {
    type Err = LabelingError;

    /// `hflip`, `rotate90`, `color_jitter[:seed]`, `distort[:seed]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let seed = || -> Result<u64, LabelingError> {
            arg.map_or(Ok(0), |a| {
                a.parse()
                    .map_err(|_| LabelingError::UnsupportedOp(s.to_string()))
            })
        };
        match (name.trim(), arg) {
            ("hflip", None) => Ok(Self::Hflip),
            ("rotate90", None) => Ok(Self::Rotate90),
            ("color_jitter", _) => Ok(Self::ColorJitter { seed: seed()? }),
            ("distort", _) => Ok(Self::Distort { seed: seed()? }),
            _ => Err(LabelingError::UnsupportedOp(s.to_string())),
        }
    }
}

pub fn hflip_box(b: &BoundingBox, width: u32) -> BoundingBox {
    let w = width as i32;
    BoundingBox {
        x_min: w - b.x_max,
        x_max: w - b.x_min,
        ..b.clone()
    }
}

/// Box after a clockwise quarter turn of a `height`-row image: pixel `(x, y)`
/// moves to `(height - 1 - y, x)`.
pub fn rotate90_box(b: &BoundingBox, height: u32) -> BoundingBox {
    let h = height as i32;
    BoundingBox {
        x_min: h - b.y_max,
        y_min: b.x_min,
        x_max: h - b.y_min,
        y_max: b.x_max,
        ..b.clone()
    }
}

fn scale_box(b: &BoundingBox, sx: f64, sy: f64) -> BoundingBox {
    let x_min = (f64::from(b.x_min) * sx).round() as i32;
    let y_min = (f64::from(b.y_min) * sy).round() as i32;
    BoundingBox {
        x_min,
        y_min,
        x_max: ((f64::from(b.x_max) * sx).round() as i32).max(x_min + 1),
        y_max: ((f64::from(b.y_max) * sy).round() as i32).max(y_min + 1),
        ..b.clone()
    }
}

fn apply(sample: &Sample, op: AugmentOp) -> Sample {
    let (w, h) = (sample.image.width(), sample.image.height());
    match op {
        AugmentOp::Hflip => Sample {
            image: sample.image.fliph(),
            boxes: sample.boxes.iter().map(|b| hflip_box(b, w)).collect(),
        },
        AugmentOp::Rotate90 => Sample {
            image: sample.image.rotate90(),
            boxes: sample.boxes.iter().map(|b| rotate90_box(b, h)).collect(),
        },
        AugmentOp::ColorJitter { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gain: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.8..1.2));
            let offset: [f64; 3] = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
            let mut img: RgbImage = sample.image.to_rgb8();
            for px in img.pixels_mut() {
                *px = Rgb(std::array::from_fn(|c| {
                    (f64::from(px.0[c]) * gain[c] + offset[c]).round().clamp(0.0, 255.0) as u8
                }));
            }
            Sample {
                image: DynamicImage::ImageRgb8(img),
                boxes: sample.boxes.clone(),
            }
        }
        AugmentOp::Distort { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nw = ((f64::from(w) * rng.random_range(0.8..1.25)).round() as u32).max(1);
            let nh = ((f64::from(h) * rng.random_range(0.8..1.25)).round() as u32).max(1);
            let (sx, sy) = (f64::from(nw) / f64::from(w), f64::from(nh) / f64::from(h));
            Sample {
                image: sample.image.resize_exact(nw, nh, FilterType::Nearest),
                boxes: sample.boxes.iter().map(|b| scale_box(b, sx, sy)).collect(),
            }
        }
    }
}

/// The original sample followed by one augmented copy per op. Output is
/// fully determined by the ops and their seeds.
pub fn augment(sample: &Sample, ops: &[AugmentOp]) -> Result<Vec<Sample>, LabelingError> {
    let (w, h) = (sample.image.width(), sample.image.height());
    if let Some(b) = sample.boxes.iter().find(|b| !b.fits_within(w, h)) {
        return Err(LabelingError::OutOfImage(b.clone(), w, h));
    }
    let mut out = vec![sample.clone()];
    out.extend(ops.iter().map(|&op| apply(sample, op)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma};

    fn sample_with_box(w: u32, h: u32, b: BoundingBox) -> Sample {
        let mut img = GrayImage::new(w, h);
        for y in b.y_min..b.y_max {
            for x in b.x_min..b.x_max {
                img.put_pixel(x as u32, y as u32, Luma([255]));
            }
        }
        Sample {
            image: DynamicImage::ImageLuma8(img),
            boxes: vec![b],
        }
    }

    fn tight_box(img: &DynamicImage) -> BoundingBox {
        let g = img.to_luma8();
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, 0, 0);
        for (x, y, p) in g.enumerate_pixels() {
            if p.0[0] > 127 {
                x0 = x0.min(x as i32);
                y0 = y0.min(y as i32);
                x1 = x1.max(x as i32 + 1);
                y1 = y1.max(y as i32 + 1);
            }
        }
        BoundingBox::new(x0, y0, x1, y1)
    }

    #[test]
    fn hflip_mirrors() {
        assert_eq!(
            hflip_box(&BoundingBox::new(0, 0, 10, 10), 100),
            BoundingBox::new(90, 0, 100, 10)
        );
    }

    #[test]
    fn geometric_ops_move_boxes_with_pixels() {
        let s = sample_with_box(40, 30, BoundingBox::new(3, 5, 12, 9));
        let out = augment(&s, &[AugmentOp::Hflip, AugmentOp::Rotate90]).unwrap();
        assert_eq!(out.len(), 3);
        for aug in &out {
            assert_eq!(aug.boxes[0], tight_box(&aug.image));
        }
        assert_eq!((out[2].image.width(), out[2].image.height()), (30, 40));
    }

    #[test]
    fn distort_keeps_boxes_close() {
        let s = sample_with_box(64, 48, BoundingBox::new(10, 10, 30, 20));
        let out = augment(&s, &[AugmentOp::Distort { seed: 5 }]).unwrap();
        let b = &out[1].boxes[0];
        assert!(b.iou(&tight_box(&out[1].image)) > 0.8);
    }

    #[test]
    fn seeded_ops_are_deterministic() {
        let s = sample_with_box(32, 32, BoundingBox::new(1, 1, 9, 9));
        let ops = [AugmentOp::ColorJitter { seed: 9 }, AugmentOp::Distort { seed: 9 }];
        assert_eq!(augment(&s, &ops).unwrap(), augment(&s, &ops).unwrap());
    }

    #[test]
    fn empty_ops_is_identity() {
        let s = sample_with_box(8, 8, BoundingBox::new(1, 1, 3, 3));
        assert_eq!(augment(&s, &[]).unwrap(), vec![s]);
    }

    #[test]
    fn parses_ops() {
        assert_eq!("hflip".parse::<AugmentOp>().unwrap(), AugmentOp::Hflip);
        assert_eq!(
            "color_jitter:42".parse::<AugmentOp>().unwrap(),
            AugmentOp::ColorJitter { seed: 42 }
        );
        assert!(matches!(
            "sharpen".parse::<AugmentOp>(),
            Err(LabelingError::UnsupportedOp(_))
        ));
    }
}
