use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoise::{BackendDescriptor, Condition};
use crate::error::{Error, Result};
use crate::field::Shape;
use crate::imaging::ImageBuffer;
use crate::pipeline::{BaseConfig, PipelinePlan, StageConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub name: String,
    pub shape: Shape,
    /// SHA-256 of the image's float data in field-file encoding.
    pub sha256: String,
    /// File name relative to the manifest, once written.
    pub path: Option<String>,
}

impl OutputRecord {
    pub fn new(name: &str, image: &ImageBuffer) -> Self {
        Self {
            name: name.to_owned(),
            shape: image.shape(),
            sha256: image.as_field().sha256_hex(),
            path: None,
        }
    }
}

/// Everything needed to rerun a pipeline, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub condition: Condition,
    pub backend: BackendDescriptor,
    pub base: BaseConfig,
    pub stages: Vec<StageConfig>,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn new(
        plan: &PipelinePlan,
        backend: BackendDescriptor,
        timings: Vec<StageTiming>,
        outputs: Vec<OutputRecord>,
    ) -> Self {
        Self {
            seed: plan.seed,
            condition: plan.condition.clone(),
            backend,
            base: plan.base.clone(),
            stages: plan.stages.clone(),
            timings,
            outputs,
        }
    }

    pub fn plan(&self) -> PipelinePlan {
        PipelinePlan {
            condition: self.condition.clone(),
            seed: self.seed,
            base: self.base.clone(),
            stages: self.stages.clone(),
        }
    }

    pub fn final_hash(&self) -> &str {
        &self.outputs.last().expect("manifest lists the base image").sha256
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.seconds).sum()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }
}
