use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{decode_output, letterbox_transform, Detector};
use crate::detection::{ClassList, Detection};
use crate::error::{Error, Result};

type Plan = Arc<TypedRunnableModel>;

/// ONNX detector run in-process through tract. The input is a letterboxed
/// `[1, 3, S, S]` RGB tensor scaled to `[0, 1]`.
pub struct EmbeddedDetector {
    plan: Plan,
    input_size: u32,
    classes: ClassList,
    threshold: f64,
}

impl EmbeddedDetector {
    pub fn load(path: &Path, input_size: u32, classes: ClassList, threshold: f64) -> Result<Self> {
        let s = input_size as usize;
        let load = || -> TractResult<Plan> {
            tract_onnx::onnx()
                .model_for_path(path)?
                .with_input_fact(0, f32::fact([1, 3, s, s]).into())?
                .into_optimized()?
                .into_runnable()
        };
        let plan = load().map_err(|e| Error::ModelLoad(format!("{}: {e}", path.display())))?;
        Ok(Self {
            plan,
            input_size,
            classes,
            threshold,
        })
    }
}

impl Detector for EmbeddedDetector {
    fn id(&self) -> &str {
        "embedded"
    }

    fn detect(&self, _image_ref: &str, image: &[u8]) -> Result<Vec<Detection>> {
        let img = image::load_from_memory(image)
            .map_err(|e| Error::ImageDecode(e.to_string()))?
            .to_rgb8();
        let lb = letterbox_transform(img.width(), img.height(), self.input_size)?;
        let padded = lb.apply(&img);
        let s = self.input_size as usize;
        let input: Tensor = tract_ndarray::Array4::from_shape_fn((1, 3, s, s), |(_, c, y, x)| {
            f32::from(padded.get_pixel(x as u32, y as u32)[c]) / 255.0
        })
        .into();
        let outputs = self
            .plan
            .run(tvec!(input.into()))
            .map_err(|e| Error::Inference(e.to_string()))?;
        let out = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Inference(e.to_string()))?;
        let data: Vec<f32> = out.iter().copied().collect();
        decode_output(out.shape(), &data, &lb, &self.classes, self.threshold)
    }
}
