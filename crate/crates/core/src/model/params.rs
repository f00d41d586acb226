use rand_distr::{Distribution, Normal};

use super::arch::ArchitectureDescriptor;
use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    ConvWeight,
    ConvBias,
    HeadWeight,
    HeadBias,
}

impl BlockKind {
    pub fn is_bias(self) -> bool {
        matches!(self, BlockKind::ConvBias | BlockKind::HeadBias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub kind: BlockKind,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// All trainable parameters, in forward order:
/// `conv{i}.weight [Cout, Cin, k, k]`, `conv{i}.bias [Cout]`, …,
/// `head.weight [L, C]`, `head.bias [L]`.
///
/// Gradients use the same type, so every gradient block lines up with the
/// parameter block it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub arch: ArchitectureDescriptor,
    pub blocks: Vec<ParamBlock<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(arch: &ArchitectureDescriptor) -> Result<Self> {
        let shapes = arch.block_shapes()?;
        let mut blocks = Vec::new();
        for (i, s) in shapes.iter().enumerate() {
            let wshape = vec![s.out_channels, s.in_channels, s.kernel, s.kernel];
            blocks.push(ParamBlock {
                name: format!("conv{i}.weight"),
                kind: BlockKind::ConvWeight,
                data: vec![T::zero(); wshape.iter().product()],
                shape: wshape,
            });
            blocks.push(ParamBlock {
                name: format!("conv{i}.bias"),
                kind: BlockKind::ConvBias,
                shape: vec![s.out_channels],
                data: vec![T::zero(); s.out_channels],
            });
        }
        let c = arch.feature_channels();
        blocks.push(ParamBlock {
            name: "head.weight".into(),
            kind: BlockKind::HeadWeight,
            shape: vec![arch.n_labels, c],
            data: vec![T::zero(); arch.n_labels * c],
        });
        blocks.push(ParamBlock {
            name: "head.bias".into(),
            kind: BlockKind::HeadBias,
            shape: vec![arch.n_labels],
            data: vec![T::zero(); arch.n_labels],
        });
        Ok(ModelParams {
            arch: arch.clone(),
            blocks,
        })
    }

    /// He-normal convolution weights, LeCun-normal head weights, zero biases.
    pub fn init(arch: &ArchitectureDescriptor, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = rng::stream(seed, "init", &[]);
        for b in &mut p.blocks {
            let gain = match b.kind {
                BlockKind::ConvWeight => 2.0,
                BlockKind::HeadWeight => 1.0,
                _ => continue,
            };
            {
                let fan_in: usize = b.shape[1..].iter().product();
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite");
                for v in &mut b.data {
                    *v = T::from_f64(normal.sample(&mut rng));
                }
            }
        }
        Ok(p)
    }

    pub fn conv_weight(&self, i: usize) -> &[T] {
        &self.blocks[2 * i].data
    }
    pub fn conv_bias(&self, i: usize) -> &[T] {
        &self.blocks[2 * i + 1].data
    }
    pub fn head_weight(&self) -> &[T] {
        &self.blocks[self.blocks.len() - 2].data
    }
    pub fn head_bias(&self) -> &[T] {
        &self.blocks[self.blocks.len() - 1].data
    }
    pub fn head_weight_mut(&mut self) -> &mut [T] {
        let n = self.blocks.len();
        &mut self.blocks[n - 2].data
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    /// Sum of squared non-bias parameters, the L2 penalty's base.
    pub fn weight_sq_norm(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| !b.kind.is_bias())
            .flat_map(|b| b.data.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }

    /// FNV-1a over the bit patterns of every value. Identifies a parameter
    /// state for cache staleness checks and no-retraining assertions.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in &self.blocks {
            for v in &b.data {
                for byte in v.as_f64().to_bits().to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    kind: b.kind,
                    shape: b.shape.clone(),
                    data: b.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ModelParams<T>) -> Result<()> {
        let ok = self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.shape == b.shape && a.kind == b.kind);
        if ok {
            Ok(())
        } else {
            Err(Error::Contract("parameter layouts differ".into()))
        }
    }

    /// `self += other`, block by block.
    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_of_default_model() {
        let arch = ArchitectureDescriptor::default_for(64, 64, 1, 3);
        let p = ModelParams::<f32>::init(&arch, 1).unwrap();
        let names: Vec<&str> = p.blocks.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names.len(), 10);
        assert_eq!(names[0], "conv0.weight");
        assert_eq!(names[9], "head.bias");
        assert_eq!(p.blocks[6].shape, vec![32, 32, 3, 3]);
        assert_eq!(p.head_weight().len(), 96);
        assert!(p.is_finite());
        assert_eq!(
            p.checksum(),
            ModelParams::<f32>::init(&arch, 1).unwrap().checksum()
        );
        assert_ne!(
            p.checksum(),
            ModelParams::<f32>::init(&arch, 2).unwrap().checksum()
        );
    }
}
