use crate::model::{patchify_raw, VitConfig};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use specvit_core::ForecastTask;
use specvit_imaging::{
    intensity_strip, render_lineplot, render_multimodal, strip_raster, CwtPlan, GrayImage,
    MorletConfig, IMAGE_SIZE, STRIP_ROWS,
};
use specvit_nn::Scalar;

/// Which rendering of the context window the model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Intensity strip over wavelet spectrogram.
    NumSpec,
    /// Plain line drawing.
    Lineplot,
    /// Intensity strip alone.
    Num,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NumSpec, Variant::Lineplot, Variant::Num];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NumSpec => "vit-num-spec",
            Variant::Lineplot => "vit-lineplot",
            Variant::Num => "vit-num",
        }
    }

    pub fn image_shape(self) -> (usize, usize) {
        match self {
            Variant::Num => (STRIP_ROWS, IMAGE_SIZE),
            _ => (IMAGE_SIZE, IMAGE_SIZE),
        }
    }

    /// `base` with the input size this variant renders.
    pub fn configure(self, base: VitConfig) -> VitConfig {
        let (h, w) = self.image_shape();
        base.with_image(h, w)
    }
}

/// Renders scaled context windows for one variant; holds the wavelet plan
/// so every window of a given length reuses it.
#[derive(Debug, Clone)]
pub struct Renderer {
    variant: Variant,
    morlet: Option<MorletConfig>,
    plan: Option<CwtPlan>,
}

impl Renderer {
    /// `morlet` overrides the default scale grid for the window length.
    pub fn new(variant: Variant, morlet: Option<MorletConfig>) -> Self {
        Self {
            variant,
            morlet,
            plan: None,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    fn plan_for(&self, len: usize) -> Result<CwtPlan> {
        let cfg = self.morlet.unwrap_or_else(|| MorletConfig::for_length(len));
        Ok(CwtPlan::new(cfg, len)?)
    }

    /// Prepares the wavelet plan for windows of `len` samples.
    pub fn prepare(&mut self, len: usize) -> Result<()> {
        if self.variant == Variant::NumSpec && self.plan.as_ref().map(CwtPlan::len) != Some(len) {
            self.plan = Some(self.plan_for(len)?);
        }
        Ok(())
    }

    pub fn render(&self, scaled: &[f64]) -> Result<GrayImage> {
        Ok(match self.variant {
            Variant::NumSpec => match &self.plan {
                Some(plan) if plan.len() == scaled.len() => render_multimodal(scaled, plan)?,
                _ => render_multimodal(scaled, &self.plan_for(scaled.len())?)?,
            },
            Variant::Lineplot => render_lineplot(scaled),
            Variant::Num => strip_raster(&intensity_strip(scaled)?),
        })
    }
}

/// Rendered inputs and scaled targets for a set of tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub image_h: usize,
    pub image_w: usize,
    pub horizon: usize,
    pub images: Vec<u8>,
    pub targets: Vec<f32>,
}

impl Samples {
    /// Renders every task in parallel; output order follows `tasks`.
    pub fn from_tasks(tasks: &[ForecastTask], renderer: &mut Renderer) -> Result<Self> {
        let (image_h, image_w) = renderer.variant().image_shape();
        let horizon = tasks.first().map_or(0, ForecastTask::horizon);
        if let Some(t) = tasks.first() {
            renderer.prepare(t.input_len())?;
        }
        let renderer = &*renderer;
        let rendered: Vec<(Vec<u8>, Vec<f32>)> = tasks
            .par_iter()
            .map(|t| {
                let img = renderer.render(&t.scaled_context())?;
                let target = t.scaled_target().into_iter().map(|v| v as f32).collect();
                Ok((img.pixels, target))
            })
            .collect::<Result<_>>()?;
        let mut images = Vec::with_capacity(rendered.len() * image_h * image_w);
        let mut targets = Vec::with_capacity(rendered.len() * horizon);
        for (img, tgt) in rendered {
            images.extend(img);
            targets.extend(tgt);
        }
        Ok(Self {
            image_h,
            image_w,
            horizon,
            images,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len() / (self.image_h * self.image_w).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, i: usize) -> GrayImage {
        let n = self.image_h * self.image_w;
        GrayImage {
            width: self.image_w,
            height: self.image_h,
            pixels: self.images[i * n..(i + 1) * n].to_vec(),
        }
    }

    pub fn patches<T: Scalar>(&self, indices: &[usize], cfg: &VitConfig) -> Vec<T> {
        let n = self.image_h * self.image_w;
        indices
            .iter()
            .flat_map(|&i| patchify_raw::<T>(&self.images[i * n..(i + 1) * n], cfg))
            .collect()
    }

    pub fn targets<T: Scalar>(&self, indices: &[usize]) -> Vec<T> {
        let h = self.horizon;
        indices
            .iter()
            .flat_map(|&i| self.targets[i * h..(i + 1) * h].iter().map(|&v| T::lit(v as f64)))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let n = self.image_h * self.image_w;
        let h = self.horizon;
        Self {
            image_h: self.image_h,
            image_w: self.image_w,
            horizon: h,
            images: indices.iter().flat_map(|&i| self.images[i * n..(i + 1) * n].iter().copied()).collect(),
            targets: indices.iter().flat_map(|&i| self.targets[i * h..(i + 1) * h].iter().copied()).collect(),
        }
    }
}
