use std::collections::{BTreeMap, BTreeSet};

use crate::numerics::{
    conv2d_backward_input, conv2d_forward, pool2x2_backward, pool2x2_forward, relu_backward,
    relu_forward, ConvLayer, NumericsError, PoolRecord, Tensor3,
};

use super::{ExtractorError, NetworkSpec, NetworkWeights, Stage};

enum Step<'w> {
    Conv(&'w ConvLayer),
    Relu { input: Tensor3 },
    Pool(PoolRecord),
}

struct TracedStage<'w> {
    step: Step<'w>,
    /// The output of this stage is the feature map of this layer.
    feature: Option<String>,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct ForwardTrace<'w> {
    input_shape: (usize, usize, usize),
    stages: Vec<TracedStage<'w>>,
    features: BTreeMap<String, Tensor3>,
}

impl ForwardTrace<'_> {
    pub fn feature(&self, layer: &str) -> Option<&Tensor3> {
        self.features.get(layer)
    }

    pub fn features(&self) -> &BTreeMap<String, Tensor3> {
        &self.features
    }

    pub fn requested(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }
}

/// Detached copies of feature maps, keyed by layer name.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBundle {
    maps: BTreeMap<String, Tensor3>,
}

impl FeatureBundle {
    pub fn get(&self, layer: &str) -> Option<&Tensor3> {
        self.maps.get(layer)
    }

    pub fn layers(&self) -> impl Iterator<Item = &str> {
        self.maps.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor3)> {
        self.maps.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Runs `x` through the network, stopping after the deepest requested layer.
/// Feature maps are taken after each convolution's ReLU.
pub fn forward<'w, S: AsRef<str>>(
    x: &Tensor3,
    weights: &'w NetworkWeights,
    spec: &NetworkSpec,
    request: &[S],
) -> Result<ForwardTrace<'w>, ExtractorError> {
    if x.channels() != 3 {
        return Err(NumericsError::ChannelMismatch {
            expected: 3,
            found: x.channels(),
        }
        .into());
    }
    let mut wanted = BTreeSet::new();
    for name in request {
        let name = name.as_ref();
        if !spec.contains(name) {
            return Err(ExtractorError::UnknownLayer(name.to_owned()));
        }
        wanted.insert(name.to_owned());
    }
    if wanted.is_empty() {
        return Err(ExtractorError::EmptyRequest);
    }

    let specs = spec.stages();
    let mut stages = Vec::new();
    let mut features = BTreeMap::new();
    let mut current = x.clone();
    let mut pending: Option<String> = None;
    for (i, stage) in specs.iter().enumerate() {
        let (step, next) = match stage {
            Stage::Conv(name) => {
                let layer = weights
                    .get(name)
                    .ok_or_else(|| ExtractorError::MissingWeights(name.clone()))?;
                let out = conv2d_forward(&current, layer).map_err(|source| {
                    ExtractorError::Layer {
                        layer: name.clone(),
                        source,
                    }
                })?;
                pending = Some(name.clone());
                (Step::Conv(layer), out)
            }
            Stage::Relu => {
                let out = relu_forward(&current);
                (Step::Relu { input: current }, out)
            }
            Stage::Pool => {
                let (out, record) = pool2x2_forward(&current, spec.pool_mode())?;
                (Step::Pool(record), out)
            }
        };
        current = next;
        // A conv's feature is its ReLU output, or its raw output if no ReLU follows.
        let tags_feature = match stage {
            Stage::Conv(_) => specs.get(i + 1) != Some(&Stage::Relu),
            Stage::Relu => true,
            Stage::Pool => false,
        };
        let feature = if tags_feature { pending.take() } else { None };
        if let Some(name) = &feature {
            if wanted.remove(name) {
                features.insert(name.clone(), current.clone());
            }
        }
        stages.push(TracedStage { step, feature });
        if wanted.is_empty() {
            break;
        }
    }
    // Every remaining name was validated against the spec, so this is unreachable
    // unless the spec lists a conv twice.
    if let Some(name) = wanted.into_iter().next() {
        return Err(ExtractorError::UnknownLayer(name));
    }
    Ok(ForwardTrace {
        input_shape: x.shape(),
        stages,
        features,
    })
}

pub fn detach(trace: &ForwardTrace<'_>) -> FeatureBundle {
    FeatureBundle {
        maps: trace.features.clone(),
    }
}

/// Gradient with respect to the network input of a loss whose gradients with
/// respect to the requested feature maps are `layer_grads`. Contributions from
/// several layers accumulate through the stages they share.
pub fn backward_to_input(
    trace: &ForwardTrace<'_>,
    layer_grads: &BTreeMap<String, Tensor3>,
) -> Result<Tensor3, ExtractorError> {
    for (name, grad) in layer_grads {
        let map = trace
            .features
            .get(name)
            .ok_or_else(|| ExtractorError::NotRequested(name.clone()))?;
        if map.shape() != grad.shape() {
            return Err(ExtractorError::Layer {
                layer: name.clone(),
                source: NumericsError::ShapeMismatch {
                    expected: map.shape(),
                    found: grad.shape(),
                },
            });
        }
    }
    let (c, h, w) = trace.input_shape;
    let mut grad: Option<Tensor3> = None;
    for stage in trace.stages.iter().rev() {
        if let Some(injected) = stage.feature.as_ref().and_then(|n| layer_grads.get(n)) {
            match grad.as_mut() {
                Some(g) => g.add_assign(injected)?,
                None => grad = Some(injected.clone()),
            }
        }
        let Some(g) = grad.as_ref() else { continue };
        grad = Some(match &stage.step {
            Step::Conv(layer) => {
                conv2d_backward_input(g, layer).map_err(|source| ExtractorError::Layer {
                    layer: layer.name().to_owned(),
                    source,
                })?
            }
            Step::Relu { input } => relu_backward(g, input)?,
            Step::Pool(record) => pool2x2_backward(g, record)?,
        });
    }
    Ok(grad.unwrap_or_else(|| Tensor3::zeros(c, h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_weights() -> NetworkWeights {
        let k1: Vec<f64> = (0..4 * 3 * 9).map(|i| ((i * 37 % 23) as f64 - 11.0) * 0.01).collect();
        let k2: Vec<f64> = (0..4 * 4 * 9).map(|i| ((i * 29 % 19) as f64 - 9.0) * 0.01).collect();
        NetworkWeights::new(vec![
            ConvLayer::new("conv1_1", 3, 4, k1, vec![0.01, -0.02, 0.03, 0.0]).unwrap(),
            ConvLayer::new("conv1_2", 4, 4, k2, vec![0.0, 0.01, -0.01, 0.02]).unwrap(),
        ])
        .unwrap()
    }

    fn input() -> Tensor3 {
        Tensor3::from_fn(3, 6, 6, |c, y, x| ((c * 31 + y * 7 + x * 3) % 13) as f64 - 6.0)
    }

    #[test]
    fn requested_maps_have_expected_shapes() {
        let w = tiny_weights();
        let trace = forward(&input(), &w, &NetworkSpec::tiny(), &["conv1_1", "conv1_2"]).unwrap();
        assert_eq!(trace.feature("conv1_1").unwrap().shape(), (4, 6, 6));
        assert_eq!(trace.feature("conv1_2").unwrap().shape(), (4, 6, 6));
        assert!(trace.feature("conv1_1").unwrap().data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn stops_after_deepest_request() {
        let w = tiny_weights();
        let trace = forward(&input(), &w, &NetworkSpec::tiny(), &["conv1_1"]).unwrap();
        assert_eq!(trace.stages.len(), 2);
    }

    #[test]
    fn unknown_layer() {
        let w = tiny_weights();
        assert_eq!(
            forward(&input(), &w, &NetworkSpec::tiny(), &["conv4_2"]).err(),
            Some(ExtractorError::UnknownLayer("conv4_2".into()))
        );
        assert_eq!(
            forward::<&str>(&input(), &w, &NetworkSpec::tiny(), &[]).err(),
            Some(ExtractorError::EmptyRequest)
        );
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_maps() {
        let w = NetworkWeights::new(
            tiny_weights()
                .layers()
                .iter()
                .map(ConvLayer::without_bias)
                .collect(),
        )
        .unwrap();
        let trace = forward(&Tensor3::zeros(3, 4, 4), &w, &NetworkSpec::tiny(), &["conv1_2"]).unwrap();
        assert!(trace.feature("conv1_2").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detach_is_a_copy() {
        let w = tiny_weights();
        let spec = NetworkSpec::tiny();
        let trace = forward(&input(), &w, &spec, &["conv1_1"]).unwrap();
        let bundle = detach(&trace);
        assert_eq!(bundle.len(), 1);
        assert_eq!(bundle.get("conv1_1"), trace.feature("conv1_1"));
        let before = bundle.clone();
        drop(trace);
        let _other = forward(&input().scaled(2.0), &w, &spec, &["conv1_1"]).unwrap();
        assert_eq!(bundle, before);
    }

    #[test]
    fn zero_gradients_give_zero() {
        let w = tiny_weights();
        let trace = forward(&input(), &w, &NetworkSpec::tiny(), &["conv1_2"]).unwrap();
        let g = backward_to_input(&trace, &BTreeMap::new()).unwrap();
        assert_eq!(g, Tensor3::zeros(3, 6, 6));
        let mut grads = BTreeMap::new();
        grads.insert("conv1_2".to_owned(), Tensor3::zeros(4, 6, 6));
        assert_eq!(backward_to_input(&trace, &grads).unwrap(), Tensor3::zeros(3, 6, 6));
    }

    #[test]
    fn gradient_errors() {
        let w = tiny_weights();
        let trace = forward(&input(), &w, &NetworkSpec::tiny(), &["conv1_1"]).unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("conv1_2".to_owned(), Tensor3::zeros(4, 6, 6));
        assert_eq!(
            backward_to_input(&trace, &grads).err(),
            Some(ExtractorError::NotRequested("conv1_2".into()))
        );
        let mut grads = BTreeMap::new();
        grads.insert("conv1_1".to_owned(), Tensor3::zeros(4, 6, 5));
        assert!(matches!(
            backward_to_input(&trace, &grads),
            Err(ExtractorError::Layer { .. })
        ));
    }

    #[test]
    fn injection_is_additive() {
        let w = tiny_weights();
        let trace = forward(&input(), &w, &NetworkSpec::tiny(), &["conv1_1", "conv1_2"]).unwrap();
        let g1 = Tensor3::from_fn(4, 6, 6, |c, y, x| ((c + 2 * y + 3 * x) % 5) as f64 - 2.0);
        let g2 = Tensor3::from_fn(4, 6, 6, |c, y, x| ((3 * c + y + x) % 7) as f64 - 3.0);
        let single = |name: &str, g: &Tensor3| {
            let mut m = BTreeMap::new();
            m.insert(name.to_owned(), g.clone());
            backward_to_input(&trace, &m).unwrap()
        };
        let mut both = BTreeMap::new();
        both.insert("conv1_1".to_owned(), g1.clone());
        both.insert("conv1_2".to_owned(), g2.clone());
        let joint = backward_to_input(&trace, &both).unwrap();
        let mut sum = single("conv1_1", &g1);
        sum.add_assign(&single("conv1_2", &g2)).unwrap();
        for (a, b) in joint.data().iter().zip(sum.data()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
