//! Cognitive modules and the publish-subscribe bus that feeds them.

use std::sync::Arc;

use image::DynamicImage;
use serde::{Deserialize, Serialize};
use stepwise_core::labeling::Detector;
use stepwise_core::BoundingBox;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Frame,
    Detections,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    InProcess,
    Plugin { command: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleBinding {
    pub module: String,
    pub subscription: StreamKind,
    pub endpoint: Endpoint,
}

pub enum ModuleInput<'a> {
    Frame(&'a DynamicImage),
    Detections(&'a [BoundingBox]),
}

impl ModuleInput<'_> {
    pub fn kind(&self) -> StreamKind {
        match self {
            ModuleInput::Frame(_) => StreamKind::Frame,
            ModuleInput::Detections(_) => StreamKind::Detections,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModuleError {
    #[error("no module subscribes to {0:?} messages")]
    NoSubscriber(StreamKind),
    #[error("module {module}: {message}")]
    Failed { module: String, message: String },
}

/// Turns one sensor message into labeled detections.
pub trait CognitiveModule: Send + Sync {
    fn binding(&self) -> ModuleBinding;
    fn process(&self, input: &ModuleInput<'_>) -> Result<Vec<BoundingBox>, ModuleError>;
}

/// Forwards client-side detections unchanged.
pub struct PassThrough;

impl CognitiveModule for PassThrough {
    fn binding(&self) -> ModuleBinding {
        ModuleBinding {
            module: "pass-through".into(),
            subscription: StreamKind::Detections,
            endpoint: Endpoint::InProcess,
        }
    }

    fn process(&self, input: &ModuleInput<'_>) -> Result<Vec<BoundingBox>, ModuleError> {
        match input {
            ModuleInput::Detections(boxes) => Ok(boxes.to_vec()),
            ModuleInput::Frame(_) => Ok(Vec::new()),
        }
    }
}

/// Runs an object detector on raw frames.
pub struct DetectorModule {
    name: String,
    endpoint: Endpoint,
    detector: Arc<dyn Detector>,
}

impl DetectorModule {
    pub fn new(name: &str, endpoint: Endpoint, detector: Arc<dyn Detector>) -> Self {
        Self {
            name: name.to_string(),
            endpoint,
            detector,
        }
    }
}

impl CognitiveModule for DetectorModule {
    fn binding(&self) -> ModuleBinding {
        ModuleBinding {
            module: self.name.clone(),
            subscription: StreamKind::Frame,
            endpoint: self.endpoint.clone(),
        }
    }

    fn process(&self, input: &ModuleInput<'_>) -> Result<Vec<BoundingBox>, ModuleError> {
        match input {
            ModuleInput::Frame(image) => self.detector.detect(image).map_err(|e| ModuleError::Failed {
                module: self.name.clone(),
                message: e.to_string(),
            }),
            ModuleInput::Detections(_) => Ok(Vec::new()),
        }
    }
}

/// Distributes each message to the modules subscribed to its kind and
/// concatenates their detections in registration order.
#[derive(Clone, Default)]
pub struct PubSub {
    modules: Vec<Arc<dyn CognitiveModule>>,
}

impl PubSub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, module: Arc<dyn CognitiveModule>) {
        self.modules.push(module);
    }

    pub fn bindings(&self) -> Vec<ModuleBinding> {
        self.modules.iter().map(|m| m.binding()).collect()
    }

    pub fn has_subscriber(&self, kind: StreamKind) -> bool {
        self.modules.iter().any(|m| m.binding().subscription == kind)
    }

    pub fn publish(&self, input: &ModuleInput<'_>) -> Result<Vec<BoundingBox>, ModuleError> {
        let kind = input.kind();
        let mut out = Vec::new();
        let mut any = false;
        for m in self.modules.iter().filter(|m| m.binding().subscription == kind) {
            any = true;
            out.extend(m.process(input)?);
        }
        if any {
            Ok(out)
        } else {
            Err(ModuleError::NoSubscriber(kind))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepwise_core::labeling::LabelingError;

    struct Fixed(Vec<BoundingBox>);

    impl Detector for Fixed {
        fn detect(&self, _: &DynamicImage) -> Result<Vec<BoundingBox>, LabelingError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn routes_by_kind() {
        let hit = BoundingBox::labeled(0, 0, 4, 4, "ham");
        let mut bus = PubSub::new();
        assert!(matches!(
            bus.publish(&ModuleInput::Detections(&[])),
            Err(ModuleError::NoSubscriber(StreamKind::Detections))
        ));
        bus.subscribe(Arc::new(PassThrough));
        bus.subscribe(Arc::new(DetectorModule::new(
            "fixed",
            Endpoint::InProcess,
            Arc::new(Fixed(vec![hit.clone()])),
        )));
        let given = [BoundingBox::labeled(1, 1, 2, 2, "egg")];
        assert_eq!(bus.publish(&ModuleInput::Detections(&given)).unwrap(), given.to_vec());
        let img = DynamicImage::new_rgb8(8, 8);
        assert_eq!(bus.publish(&ModuleInput::Frame(&img)).unwrap(), vec![hit]);
        assert_eq!(bus.bindings().len(), 2);
    }
}
