use crate::numerics::PoolMode;

use super::{ExtractorError, NetworkWeights};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Conv(String),
    Relu,
    Pool,
}

/// Canonical VGG-19 convolution names up to `conv5_1`, with output channels.
pub const VGG19_LAYERS: [(&str, usize); 13] = [
    ("conv1_1", 64),
    ("conv1_2", 64),
    ("conv2_1", 128),
    ("conv2_2", 128),
    ("conv3_1", 256),
    ("conv3_2", 256),
    ("conv3_3", 256),
    ("conv3_4", 256),
    ("conv4_1", 512),
    ("conv4_2", 512),
    ("conv4_3", 512),
    ("conv4_4", 512),
    ("conv5_1", 512),
];

/// Parses `conv{block}_{index}`.
pub fn parse_conv_name(name: &str) -> Option<(u32, u32)> {
    let rest = name.strip_prefix("conv")?;
    let (block, index) = rest.split_once('_')?;
    let block = block.parse().ok()?;
    let index = index.parse().ok()?;
    (block >= 1 && index >= 1).then_some((block, index))
}

/// Ordered stages of a VGG-style network: each convolution is followed by a
/// ReLU, and a 2x2 pool separates consecutive blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    stages: Vec<Stage>,
    pool_mode: PoolMode,
}

impl NetworkSpec {
    /// Builds the stage list from convolution names in canonical order.
    pub fn sequential<S: AsRef<str>>(names: &[S]) -> Result<Self, ExtractorError> {
        if names.is_empty() {
            return Err(ExtractorError::InvalidSpec("no convolution layers".into()));
        }
        let mut stages = Vec::with_capacity(names.len() * 3);
        let mut prev: Option<(u32, u32)> = None;
        for name in names {
            let name = name.as_ref();
            let key = parse_conv_name(name).ok_or_else(|| {
                ExtractorError::InvalidSpec(format!("`{name}` is not a convN_M layer name"))
            })?;
            if let Some(p) = prev {
                if key <= p {
                    return Err(ExtractorError::InvalidSpec(format!(
                        "`{name}` is out of canonical order"
                    )));
                }
                if key.0 != p.0 {
                    stages.push(Stage::Pool);
                }
            }
            stages.push(Stage::Conv(name.to_owned()));
            stages.push(Stage::Relu);
            prev = Some(key);
        }
        Ok(Self {
            stages,
            pool_mode: PoolMode::Max,
        })
    }

    /// VGG-19 truncated after the ReLU of `conv5_1`.
    pub fn vgg19() -> Self {
        let names: Vec<_> = VGG19_LAYERS.iter().map(|(n, _)| *n).collect();
        Self::sequential(&names).expect("canonical names")
    }

    /// Two convolutions, 3 -> 4 -> 4, no pooling.
    pub fn tiny() -> Self {
        Self::sequential(&["conv1_1", "conv1_2"]).expect("canonical names")
    }

    /// The sequential spec whose convolutions are exactly the layers in `weights`.
    pub fn for_weights(weights: &NetworkWeights) -> Result<Self, ExtractorError> {
        let names: Vec<_> = weights.layers().iter().map(|l| l.name()).collect();
        Self::sequential(&names)
    }

    pub fn with_pool_mode(mut self, mode: PoolMode) -> Self {
        self.pool_mode = mode;
        self
    }

    pub fn pool_mode(&self) -> PoolMode {
        self.pool_mode
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn conv_names(&self) -> impl Iterator<Item = &str> {
        self.stages.iter().filter_map(|s| match s {
            Stage::Conv(n) => Some(n.as_str()),
            _ => None,
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.conv_names().any(|n| n == name)
    }

    /// Checks that `weights` provides every convolution with a channel chain
    /// starting from 3 input channels.
    pub fn validate(&self, weights: &NetworkWeights) -> Result<(), ExtractorError> {
        let mut channels = 3;
        for name in self.conv_names() {
            let layer = weights
                .get(name)
                .ok_or_else(|| ExtractorError::MissingWeights(name.to_owned()))?;
            if layer.in_channels() != channels {
                return Err(ExtractorError::ChannelChain {
                    layer: name.to_owned(),
                    expected: channels,
                    found: layer.in_channels(),
                });
            }
            channels = layer.out_channels();
        }
        Ok(())
    }

    /// Number of 2x2 pools applied before `name`'s output.
    pub fn pools_before(&self, name: &str) -> Option<usize> {
        let mut pools = 0;
        for stage in &self.stages {
            match stage {
                Stage::Pool => pools += 1,
                Stage::Conv(n) if n == name => return Some(pools),
                _ => {}
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg19_layout() {
        let spec = NetworkSpec::vgg19();
        assert_eq!(spec.conv_names().count(), 13);
        assert_eq!(
            spec.stages().iter().filter(|s| **s == Stage::Pool).count(),
            4
        );
        assert_eq!(spec.stages().last(), Some(&Stage::Relu));
        assert_eq!(spec.pools_before("conv1_1"), Some(0));
        assert_eq!(spec.pools_before("conv4_2"), Some(3));
        assert_eq!(spec.pools_before("conv5_1"), Some(4));
        assert_eq!(spec.pools_before("conv5_2"), None);
    }

    #[test]
    fn channel_table_follows_vgg_rule() {
        for (name, channels) in VGG19_LAYERS {
            let (block, _) = parse_conv_name(name).unwrap();
            assert_eq!(channels, 64 << (block.min(4) - 1));
        }
    }

    #[test]
    fn tiny_has_no_pool() {
        let spec = NetworkSpec::tiny();
        assert_eq!(
            spec.stages(),
            &[
                Stage::Conv("conv1_1".into()),
                Stage::Relu,
                Stage::Conv("conv1_2".into()),
                Stage::Relu
            ]
        );
    }

    #[test]
    fn rejects_bad_names() {
        assert!(NetworkSpec::sequential(&["conv1_2", "conv1_1"]).is_err());
        assert!(NetworkSpec::sequential(&["conv1_1", "conv1_1"]).is_err());
        assert!(NetworkSpec::sequential(&["fc6"]).is_err());
        assert!(NetworkSpec::sequential::<&str>(&[]).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!(parse_conv_name("conv4_2"), Some((4, 2)));
        assert_eq!(parse_conv_name("conv0_1"), None);
        assert_eq!(parse_conv_name("relu1_1"), None);
    }
}
