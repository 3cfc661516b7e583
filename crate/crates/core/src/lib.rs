//! Authoring toolchain and runtime pieces for step-by-step task guidance.
//!
//! The pipeline runs from first-person recordings to executable guidance:
//!
//! - [`segmentation`] turns hand/RoI detections into working-step segments,
//!   and [`bda`] scores them against a manual segmentation.
//! - [`association`] maps each step to the objects the hands touched.
//! - [`workflow`] holds the editable step list and its JSON form.
//! - [`labeling`] builds detector training sets with tracking-assisted labels
//!   and provides a template-matching baseline detector.
//! - [`fsm`] models the task as a state machine, compiles it to a package and
//!   executes it against detections.

pub mod association;
pub mod bda;
pub mod fixtures;
pub mod frames;
pub mod fsm;
pub mod geometry;
pub mod labeling;
pub mod segmentation;
pub mod trace;
pub mod workflow;

pub use geometry::BoundingBox;
pub use segmentation::{SegmentationConfig, StepSegment};
pub use trace::DetectionFrame;
pub use workflow::{Workflow, WorkingStep};
