use crate::{Result, VitError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use specvit_imaging::GrayImage;
use specvit_nn::checkpoint::Checkpoint;
use specvit_nn::layers::{EncoderBlock, LayerNorm, Linear, Mlp, INIT_STD};
use specvit_nn::optim::AdamW;
use specvit_nn::params::trunc_normal;
use specvit_nn::{ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub patch: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub horizon: usize,
}

impl VitConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            image_h: 128,
            image_w: 128,
            patch: 16,
            embed_dim: 128,
            depth: 4,
            heads: 4,
            mlp_ratio: 4.0,
            horizon,
        }
    }

    pub fn with_image(mut self, h: usize, w: usize) -> Self {
        self.image_h = h;
        self.image_w = w;
        self
    }

    pub fn tokens(&self) -> usize {
        (self.image_h / self.patch) * (self.image_w / self.patch)
    }

    pub fn patch_len(&self) -> usize {
        self.patch * self.patch
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VitError::Config(m));
        if self.patch == 0 || self.image_h % self.patch != 0 || self.image_w % self.patch != 0 {
            return bad(format!(
                "image {}x{} is not divisible into {}-pixel patches",
                self.image_h, self.image_w, self.patch
            ));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} does not split over {} heads", self.embed_dim, self.heads));
        }
        if self.horizon == 0 || self.image_h == 0 || self.mlp_hidden() == 0 {
            return bad("horizon, image size and mlp width must be positive".into());
        }
        Ok(())
    }
}

/// Cuts an image into row-major patches, each flattened row-major and scaled
/// to `[0, 1]`. Returns `tokens * patch^2` values.
pub fn patchify<T: Scalar>(image: &GrayImage, cfg: &VitConfig) -> Result<Vec<T>> {
    if image.height != cfg.image_h || image.width != cfg.image_w {
        return Err(VitError::BadShape {
            expected_h: cfg.image_h,
            expected_w: cfg.image_w,
            got_h: image.height,
            got_w: image.width,
        });
    }
    Ok(patchify_raw(&image.pixels, cfg))
}

pub(crate) fn patchify_raw<T: Scalar>(pixels: &[u8], cfg: &VitConfig) -> Vec<T> {
    let p = cfg.patch;
    let cols = cfg.image_w / p;
    let inv = T::lit(1.0 / 255.0);
    let mut out = Vec::with_capacity(pixels.len());
    for token in 0..cfg.tokens() {
        let (pr, pc) = (token / cols, token % cols);
        for y in 0..p {
            let start = (pr * p + y) * cfg.image_w + pc * p;
            out.extend(pixels[start..start + p].iter().map(|&v| T::lit(v as f64) * inv));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct VitForecaster<T> {
    pub config: VitConfig,
    pub store: ParamStore<T>,
    patch_proj: Linear,
    position: ParamId,
    readout: ParamId,
    blocks: Vec<EncoderBlock>,
    final_norm: LayerNorm,
    head: Mlp,
}

impl<T: Scalar> VitForecaster<T> {
    pub fn new(config: VitConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.embed_dim;
        let patch_proj = Linear::new(&mut store, "patch_proj", config.patch_len(), d, &mut rng);
        let n = config.tokens() + 1;
        let position = store.add(
            "position",
            Tensor::new(trunc_normal(&mut rng, n * d, INIT_STD), vec![n, d])?,
            false,
        );
        let readout = store.add(
            "readout",
            Tensor::new(trunc_normal(&mut rng, d, INIT_STD), vec![d])?,
            false,
        );
        let blocks = (0..config.depth)
            .map(|i| EncoderBlock::new(&mut store, &format!("block{i}"), d, config.heads, config.mlp_hidden(), &mut rng))
            .collect();
        let final_norm = LayerNorm::new(&mut store, "final_norm", d);
        let head = Mlp::new(&mut store, "head", d, d, config.horizon, &mut rng);
        Ok(Self {
            config,
            store,
            patch_proj,
            position,
            readout,
            blocks,
            final_norm,
            head,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.numel()
    }

    /// Zeroes the last head layer so every forecast starts at 0.
    pub fn zero_head(&mut self) {
        let ids = [Some(self.head.fc2.weight), self.head.fc2.bias];
        for id in ids.into_iter().flatten() {
            self.store.get_mut(id).tensor.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Records the forward pass for a batch of patchified images
    /// (`batch * tokens * patch^2` values) and returns `[batch, horizon]`.
    pub fn forward(&self, tape: &mut Tape<T>, params: &[Var], patches: Vec<T>, batch: usize) -> Result<Var> {
        let cfg = &self.config;
        let x = tape.leaf(patches, vec![batch, cfg.tokens(), cfg.patch_len()])?;
        let x = self.patch_proj.forward(tape, params, x)?;
        let x = tape.prepend_row(x, params[self.readout.0])?;
        let mut x = tape.add_broadcast(x, params[self.position.0])?;
        for block in &self.blocks {
            x = block.forward(tape, params, x)?;
        }
        let x = self.final_norm.forward(tape, params, x)?;
        let r = tape.select_row(x, 0)?;
        Ok(self.head.forward(tape, params, r)?)
    }

    /// Scaled-space forecasts for already patchified inputs.
    pub fn predict_patches(&self, patches: Vec<T>, batch: usize) -> Result<Vec<Vec<T>>> {
        let mut tape = Tape::new();
        let params = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &params, patches, batch)?;
        Ok(tape.value(out).chunks(self.config.horizon).map(<[T]>::to_vec).collect())
    }

    pub fn predict_image(&self, image: &GrayImage) -> Result<Vec<T>> {
        let patches = patchify(image, &self.config)?;
        Ok(self.predict_patches(patches, 1)?.remove(0))
    }

    pub fn checkpoint(&self, config_hash: &str, meta: serde_json::Value, opt: Option<&AdamW<T>>) -> Checkpoint {
        Checkpoint::from_store(&self.store, config_hash, meta, opt)
    }

    pub fn save(&self, path: &Path, config_hash: &str, meta: serde_json::Value) -> Result<()> {
        Ok(self.checkpoint(config_hash, meta, None).save(path)?)
    }

    /// Rebuilds the model for `config` and loads weights, refusing files
    /// written for a different config hash.
    pub fn load(path: &Path, config: VitConfig, config_hash: &str) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        ckpt.check_config(config_hash)?;
        let mut model = Self::new(config, 0)?;
        ckpt.load_into(&mut model.store)?;
        Ok(model)
    }
}
