use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("degenerate box: x_min={x_min} x_max={x_max} y_min={y_min} y_max={y_max}")]
    Degenerate {
        x_min: i32,
        y_min: i32,
        x_max: i32,
        y_max: i32,
    },
    #[error("negative coordinate in box")]
    Negative,
    #[error("score {0} outside [0, 1]")]
    Score(f64),
}

/// Axis-aligned pixel box, half-open: covers columns `x_min..x_max` and rows
/// `y_min..y_max`. Origin is the top-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: i32,
    pub y_min: i32,
    pub x_max: i32,
    pub y_max: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Appearance vector supplied by an upstream detector, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

impl BoundingBox {
    pub fn new(x_min: i32, y_min: i32, x_max: i32, y_max: i32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
            label: None,
            score: None,
            feature: None,
        }
    }

    pub fn labeled(x_min: i32, y_min: i32, x_max: i32, y_max: i32, label: &str) -> Self {
        Self::new(x_min, y_min, x_max, y_max).with_label(label)
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_feature(mut self, feature: Vec<f64>) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn validate(&self) -> Result<(), BoxError> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(BoxError::Degenerate {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            });
        }
        if self.x_min < 0 || self.y_min < 0 {
            return Err(BoxError::Negative);
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(BoxError::Score(s));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> i32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> i64 {
        i64::from(self.width().max(0)) * i64::from(self.height().max(0))
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> i64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0 || h <= 0 {
            0
        } else {
            i64::from(w) * i64::from(h)
        }
    }

    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.intersection_area(other) > 0
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    /// Twice the box center, kept integral.
    pub fn center2(&self) -> (i32, i32) {
        (self.x_min + self.x_max, self.y_min + self.y_max)
    }

    pub fn translated(&self, dx: i32, dy: i32) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
            ..self.clone()
        }
    }

    /// Same geometry with label, score and feature stripped.
    pub fn geometry(&self) -> BoundingBox {
        BoundingBox::new(self.x_min, self.y_min, self.x_max, self.y_max)
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0
            && self.y_min >= 0
            && self.x_max as i64 <= width as i64
            && self.y_max as i64 <= height as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_touching_boxes_do_not_overlap() {
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(10, 0, 20, 10);
        assert_eq!(a.intersection_area(&b), 0);
        assert!(!a.overlaps(&b));
    }

    #[test]
    fn iou_of_half_shifted_boxes() {
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(5, 0, 15, 10);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn validation() {
        assert!(BoundingBox::new(0, 0, 1, 1).validate().is_ok());
        assert!(BoundingBox::new(1, 0, 1, 1).validate().is_err());
        assert_eq!(
            BoundingBox::new(-1, 0, 1, 1).validate(),
            Err(BoxError::Negative)
        );
        assert_eq!(
            BoundingBox::new(0, 0, 1, 1).with_score(1.5).validate(),
            Err(BoxError::Score(1.5))
        );
    }
}
