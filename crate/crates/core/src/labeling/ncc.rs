//! Zero-mean normalized cross-correlation on grayscale images.

use image::{DynamicImage, GrayImage};

use crate::geometry::BoundingBox;

/// Grayscale image as `f64` samples.
#[derive(Debug, Clone)]
pub struct GrayF {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl GrayF {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.as_raw().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn from_image(img: &DynamicImage) -> Self {
        Self::from_gray(&img.to_luma8())
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }
}

const FLAT: f64 = 1e-9;

/// A zero-mean patch ready for correlation.
#[derive(Debug, Clone)]
pub struct Template {
    pub width: u32,
    pub height: u32,
    mean: f64,
    centered: Vec<f64>,
    norm: f64,
}

impl Template {
    pub fn from_values(width: u32, height: u32, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            width,
            height,
            mean,
            centered,
            norm,
        }
    }

    /// Crops `bbox` out of `img`. The box must lie inside the image.
    pub fn crop(img: &GrayF, bbox: &BoundingBox) -> Self {
        let mut values = Vec::with_capacity(bbox.area() as usize);
        for y in bbox.y_min..bbox.y_max {
            for x in bbox.x_min..bbox.x_max {
                values.push(img.at(x as u32, y as u32));
            }
        }
        Self::from_values(bbox.width() as u32, bbox.height() as u32, &values)
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let g = GrayF::from_gray(img);
        Self::from_values(g.width, g.height, &g.data)
    }

    fn pixel_count(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }

    /// Correlation of the template with the window whose top-left corner is
    /// `(x, y)`, given the window's sum and sum of squares.
    fn score(&self, img: &GrayF, x: u32, y: u32, sum: f64, sum_sq: f64) -> f64 {
        let n = self.pixel_count();
        let var_w = (sum_sq - sum * sum / n).max(0.0);
        let flat_t = self.norm < FLAT;
        let flat_w = var_w.sqrt() < FLAT;
        if flat_t || flat_w {
            // two uniform patches correlate only when they are the same shade
            return if flat_t && flat_w && (sum / n - self.mean).abs() < 0.5 {
                1.0
            } else {
                0.0
            };
        }
        let mut cross = 0.0;
        let mut k = 0;
        for ty in 0..self.height {
            let row = ((y + ty) * img.width + x) as usize;
            for tx in 0..self.width as usize {
                cross += self.centered[k] * img.data[row + tx];
                k += 1;
            }
        }
        (cross / (self.norm * var_w.sqrt())).clamp(-1.0, 1.0)
    }

    /// Correlation at a single position, computing window statistics directly.
    pub fn ncc_at(&self, img: &GrayF, x: u32, y: u32) -> f64 {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for ty in 0..self.height {
            for tx in 0..self.width {
                let v = img.at(x + tx, y + ty);
                sum += v;
                sum_sq += v * v;
            }
        }
        self.score(img, x, y, sum, sum_sq)
    }

    /// Correlation at every valid top-left position, row-major with
    /// `(img.width - width + 1)` columns. Empty when the template is larger
    /// than the image.
    pub fn score_map(&self, img: &GrayF) -> (u32, u32, Vec<f64>) {
        if self.width > img.width || self.height > img.height {
            return (0, 0, Vec::new());
        }
        let integral = Integral::new(img);
        let cols = img.width - self.width + 1;
        let rows = img.height - self.height + 1;
        let mut out = Vec::with_capacity((cols * rows) as usize);
        for y in 0..rows {
            for x in 0..cols {
                let (s, s2) = integral.window(x, y, self.width, self.height);
                out.push(self.score(img, x, y, s, s2));
            }
        }
        (cols, rows, out)
    }
}

struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Integral {
    fn new(img: &GrayF) -> Self {
        let stride = img.width as usize + 1;
        let mut sum = vec![0.0; stride * (img.height as usize + 1)];
        let mut sum_sq = sum.clone();
        for y in 0..img.height as usize {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for x in 0..img.width as usize {
                let v = img.data[y * img.width as usize + x];
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
            }
        }
        Self { stride, sum, sum_sq }
    }

    fn window(&self, x: u32, y: u32, w: u32, h: u32) -> (f64, f64) {
        let (x0, y0, x1, y1) = (x as usize, y as usize, (x + w) as usize, (y + h) as usize);
        let at = |t: &[f64], xx: usize, yy: usize| t[yy * self.stride + xx];
        let f = |t: &[f64]| at(t, x1, y1) - at(t, x0, y1) - at(t, x1, y0) + at(t, x0, y0);
        (f(&self.sum), f(&self.sum_sq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: u32, h: u32) -> GrayF {
        let data = (0..w * h).map(|i| f64::from((i * 37 % 251) as u8)).collect();
        GrayF {
            width: w,
            height: h,
            data,
        }
    }

    #[test]
    fn self_correlation_is_one() {
        let img = ramp(30, 20);
        let t = Template::crop(&img, &BoundingBox::new(5, 4, 15, 12));
        assert!((t.ncc_at(&img, 5, 4) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn score_map_matches_direct_evaluation() {
        let img = ramp(25, 18);
        let t = Template::crop(&img, &BoundingBox::new(3, 3, 10, 9));
        let (cols, rows, map) = t.score_map(&img);
        assert_eq!((cols, rows), (19, 13));
        for y in 0..rows {
            for x in 0..cols {
                let direct = t.ncc_at(&img, x, y);
                assert!((map[(y * cols + x) as usize] - direct).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn flat_patches() {
        let flat = GrayF {
            width: 4,
            height: 4,
            data: vec![7.0; 16],
        };
        let t = Template::crop(&flat, &BoundingBox::new(0, 0, 2, 2));
        assert_eq!(t.ncc_at(&flat, 1, 1), 1.0);
        let other = GrayF {
            width: 4,
            height: 4,
            data: vec![200.0; 16],
        };
        assert_eq!(t.ncc_at(&other, 0, 0), 0.0);
    }
}
