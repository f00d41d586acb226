use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One convolution block: `k×k` convolution with `k/2` zero padding, ReLU,
/// then 2× average-pool downsampling (odd trailing rows/cols are dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvBlock {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureDescriptor {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub blocks: Vec<ConvBlock>,
    pub n_labels: usize,
}

/// Spatial bookkeeping for one block, derived from the descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub conv_h: usize,
    pub conv_w: usize,
    pub pool_h: usize,
    pub pool_w: usize,
}

impl BlockShape {
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
    pub fn conv_len(&self) -> usize {
        self.conv_h * self.conv_w
    }
}

impl ArchitectureDescriptor {
    /// 4 blocks of 8→16→32→32 channels, 3×3 kernels, stride 1.
    pub fn default_for(height: usize, width: usize, channels: usize, n_labels: usize) -> Self {
        ArchitectureDescriptor {
            input_height: height,
            input_width: width,
            input_channels: channels,
            blocks: [8, 16, 32, 32]
                .iter()
                .map(|&c| ConvBlock {
                    channels: c,
                    kernel: 3,
                    stride: 1,
                })
                .collect(),
            n_labels,
        }
    }

    pub fn block_shapes(&self) -> Result<Vec<BlockShape>> {
        if self.blocks.is_empty() || self.n_labels == 0 || self.input_channels == 0 {
            return Err(Error::Config(
                "architecture needs at least one block, one label and one input channel".into(),
            ));
        }
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernel % 2 == 0 || b.kernel == 0 || b.stride == 0 || b.channels == 0 {
                return Err(Error::Config(format!(
                    "block {i}: kernel must be odd and stride/channels positive"
                )));
            }
            let pad = b.kernel / 2;
            if h + 2 * pad < b.kernel || w + 2 * pad < b.kernel {
                return Err(Error::Config(format!("block {i}: input {h}x{w} too small")));
            }
            let conv_h = (h + 2 * pad - b.kernel) / b.stride + 1;
            let conv_w = (w + 2 * pad - b.kernel) / b.stride + 1;
            let (pool_h, pool_w) = (conv_h / 2, conv_w / 2);
            if pool_h == 0 || pool_w == 0 {
                return Err(Error::Config(format!(
                    "block {i}: feature map {conv_h}x{conv_w} cannot be pooled"
                )));
            }
            out.push(BlockShape {
                in_channels: c,
                in_h: h,
                in_w: w,
                out_channels: b.channels,
                kernel: b.kernel,
                stride: b.stride,
                pad,
                conv_h,
                conv_w,
                pool_h,
                pool_w,
            });
            c = b.channels;
            h = pool_h;
            w = pool_w;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.block_shapes().map(|_| ())
    }

    /// Size of the explained (last) convolution feature map.
    pub fn cam_size(&self) -> Result<(usize, usize)> {
        let last = *self.block_shapes()?.last().expect("non-empty");
        Ok((last.conv_h, last.conv_w))
    }

    /// Pipeline requirement: the explained feature map must be at least
    /// `min × min` so that explanations keep spatial resolution.
    pub fn check_cam_resolution(&self, min: usize) -> Result<()> {
        let (h, w) = self.cam_size()?;
        if h < min || w < min {
            return Err(Error::Config(format!(
                "last conv feature map is {h}x{w}, below the {min}x{min} minimum"
            )));
        }
        Ok(())
    }

    pub fn feature_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.channels)
    }
}

/// Text form stored in checkpoints, e.g.
/// `input=64x64x1;blocks=8:3:1,16:3:1;labels=3`.
impl fmt::Display for ArchitectureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("{}:{}:{}", b.channels, b.kernel, b.stride))
            .collect();
        write!(
            f,
            "input={}x{}x{};blocks={};labels={}",
            self.input_height,
            self.input_width,
            self.input_channels,
            blocks.join(","),
            self.n_labels
        )
    }
}

impl FromStr for ArchitectureDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed architecture descriptor {s:?}"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let mut input = None;
        let mut blocks = None;
        let mut labels = None;
        for part in s.split(';') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key {
                "input" => {
                    let d: Vec<&str> = value.split('x').collect();
                    if d.len() != 3 {
                        return Err(bad());
                    }
                    input = Some((num(d[0])?, num(d[1])?, num(d[2])?));
                }
                "blocks" => {
                    let parsed = value
                        .split(',')
                        .map(|b| {
                            let f: Vec<&str> = b.split(':').collect();
                            if f.len() != 3 {
                                return Err(bad());
                            }
                            Ok(ConvBlock {
                                channels: num(f[0])?,
                                kernel: num(f[1])?,
                                stride: num(f[2])?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    blocks = Some(parsed);
                }
                "labels" => labels = Some(num(value)?),
                _ => return Err(bad()),
            }
        }
        let (h, w, c) = input.ok_or_else(bad)?;
        let arch = ArchitectureDescriptor {
            input_height: h,
            input_width: w,
            input_channels: c,
            blocks: blocks.ok_or_else(bad)?,
            n_labels: labels.ok_or_else(bad)?,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let a = ArchitectureDescriptor::default_for(64, 64, 1, 3);
        let s = a.block_shapes().unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!((s[0].conv_h, s[0].pool_h), (64, 32));
        assert_eq!((s[3].in_h, s[3].conv_h, s[3].pool_h), (8, 8, 4));
        assert_eq!(a.cam_size().unwrap(), (8, 8));
        a.check_cam_resolution(4).unwrap();
        assert!(ArchitectureDescriptor::default_for(16, 16, 1, 3)
            .check_cam_resolution(4)
            .is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = ArchitectureDescriptor::default_for(32, 48, 3, 2);
        let text = a.to_string();
        assert_eq!(
            text,
            "input=32x48x3;blocks=8:3:1,16:3:1,32:3:1,32:3:1;labels=2"
        );
        assert_eq!(text.parse::<ArchitectureDescriptor>().unwrap(), a);
        assert!("input=1x2;labels=3"
            .parse::<ArchitectureDescriptor>()
            .is_err());
    }

    #[test]
    fn strided_toy_shapes() {
        let a = ArchitectureDescriptor {
            input_height: 4,
            input_width: 4,
            input_channels: 1,
            blocks: vec![ConvBlock {
                channels: 1,
                kernel: 3,
                stride: 2,
            }],
            n_labels: 1,
        };
        assert_eq!(a.cam_size().unwrap(), (2, 2));
    }
}
