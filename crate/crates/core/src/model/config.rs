use serde::{Deserialize, Serialize};

use crate::nn::kernels::{ConvCfg, ConvTCfg};

/// Architecture constants for the three learned modules. The defaults are
/// the full-scale model; tests shrink everything to miniature sizes through
/// the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square input/output image side in pixels.
    pub resolution: usize,
    /// Object representation width.
    pub object_dim: usize,
    /// Encoder conv channel progression; each layer halves the spatial side.
    pub enc_channels: Vec<usize>,
    pub enc_kernel: usize,
    pub enc_stride: usize,
    pub enc_pad: usize,
    /// Hidden width of both physics MLPs.
    pub phys_hidden: usize,
    /// Channels of the decoder seed feature map (side `dec_seed_hw`).
    pub dec_seed_ch: usize,
    pub dec_seed_hw: usize,
    /// Hidden channel progression of the decoders; the final layer's output
    /// channels (3 for images, 1 for heatmaps) are implied.
    pub dec_channels: Vec<usize>,
    pub dec_kernels: Vec<usize>,
    pub dec_pads: Vec<usize>,
    pub dec_out_pads: Vec<usize>,
    /// Negative slope of the leaky rectifier used throughout.
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            resolution: 64,
            object_dim: 256,
            enc_channels: vec![32, 64, 128, 256],
            enc_kernel: 4,
            enc_stride: 2,
            enc_pad: 1,
            phys_hidden: 512,
            dec_seed_ch: 128,
            dec_seed_hw: 4,
            dec_channels: vec![128, 64, 32],
            dec_kernels: vec![5, 5, 6, 6],
            dec_pads: vec![2, 2, 2, 2],
            dec_out_pads: vec![1, 1, 0, 0],
            leaky_slope: 0.1,
        }
    }
}

impl ModelConfig {
    /// A tiny configuration for gradient checks: 8×8 images, 8-dim objects.
    pub fn miniature() -> Self {
        ModelConfig {
            resolution: 8,
            object_dim: 8,
            enc_channels: vec![4, 8],
            enc_kernel: 4,
            enc_stride: 2,
            enc_pad: 1,
            phys_hidden: 16,
            dec_seed_ch: 8,
            dec_seed_hw: 2,
            dec_channels: vec![8],
            dec_kernels: vec![4, 4],
            dec_pads: vec![1, 1],
            dec_out_pads: vec![0, 0],
            leaky_slope: 0.1,
        }
    }

    pub fn enc_conv_cfg(&self) -> ConvCfg {
        ConvCfg {
            kernel: self.enc_kernel,
            stride: self.enc_stride,
            pad: self.enc_pad,
        }
    }

    pub fn dec_conv_cfg(&self, layer: usize) -> ConvTCfg {
        ConvTCfg {
            kernel: self.dec_kernels[layer],
            stride: 2,
            pad: self.dec_pads[layer],
            out_pad: self.dec_out_pads[layer],
        }
    }

    /// Spatial side after the encoder stack.
    pub fn enc_out_hw(&self) -> usize {
        let mut s = self.resolution;
        for _ in &self.enc_channels {
            s = self.enc_conv_cfg().out_size(s).expect("encoder geometry");
        }
        s
    }

    /// Flattened encoder feature size feeding the object projection.
    pub fn enc_flat_dim(&self) -> usize {
        let hw = self.enc_out_hw();
        self.enc_channels.last().copied().unwrap_or(3) * hw * hw
    }

    /// Checks that the stride-2 stacks actually connect the image and seed
    /// resolutions.
    pub fn validate(&self) -> Result<(), String> {
        if self.dec_kernels.len() != self.dec_channels.len() + 1
            || self.dec_pads.len() != self.dec_kernels.len()
            || self.dec_out_pads.len() != self.dec_kernels.len()
        {
            return Err("decoder layer lists are inconsistent".into());
        }
        let mut s = self.dec_seed_hw;
        for layer in 0..self.dec_kernels.len() {
            s = self
                .dec_conv_cfg(layer)
                .out_size(s)
                .ok_or_else(|| format!("decoder layer {layer} geometry invalid"))?;
        }
        if s != self.resolution {
            return Err(format!(
                "decoder reaches {s}, expected resolution {}",
                self.resolution
            ));
        }
        let mut e = self.resolution;
        for _ in &self.enc_channels {
            e = self
                .enc_conv_cfg()
                .out_size(e)
                .ok_or_else(|| "encoder geometry invalid".to_string())?;
        }
        Ok(())
    }
}
