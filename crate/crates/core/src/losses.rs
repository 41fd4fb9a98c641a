//! Content, style and distance-transform losses with their exact gradients.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::distancefield::DistanceField;
use crate::numerics::{NumericsError, Tensor3};

/// Layer whose feature maps carry the content representation.
pub const DEFAULT_CONTENT_LAYER: &str = "conv4_2";
/// Layers whose Gram matrices carry the style representation.
pub const DEFAULT_STYLE_LAYERS: [&str; 5] = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Shape(#[from] NumericsError),
    #[error("layer `{0}` missing from one side of the comparison")]
    LayerMismatch(String),
    #[error("layer `{layer}`: Gram dimensions {found:?} differ from {expected:?}")]
    DimensionMismatch {
        layer: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("distance field is {found:?}, image is {expected:?}")]
    FieldSize {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
}

/// Square `n x n` Gram matrix of a feature map with `n` channels and `m`
/// spatial positions.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if data.len() != n * n {
            return Err(NumericsError::LengthMismatch {
                expected: n * n,
                found: data.len(),
            }
            .into());
        }
        Ok(Self { n, m, data })
    }

    /// Number of channels, `N_l`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Spatial size of the layer, `M_l`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// `G[i][j] = sum_k F[i][k] * F[j][k]` with `F` viewed as channels x positions.
/// The lower triangle mirrors the upper one, so the result is exactly symmetric.
pub fn gram(features: &Tensor3) -> GramMatrix {
    let n = features.channels();
    let m = features.plane_len();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let fi = features.channel(i);
            for (j, cell) in row.iter_mut().enumerate().skip(i) {
                *cell = fi.iter().zip(features.channel(j)).map(|(a, b)| a * b).sum();
            }
        });
    for i in 0..n {
        for j in 0..i {
            data[i * n + j] = data[j * n + i];
        }
    }
    GramMatrix { n, m, data }
}

/// Gram matrices keyed by layer name.
pub type GramSet = BTreeMap<String, GramMatrix>;

pub fn gram_set<'a>(maps: impl IntoIterator<Item = (&'a str, &'a Tensor3)>) -> GramSet {
    maps.into_iter()
        .map(|(name, f)| (name.to_owned(), gram(f)))
        .collect()
}

/// `½ Σ (F − P)²` and its gradient `F − P`.
pub fn content_loss(features: &Tensor3, target: &Tensor3) -> Result<(f64, Tensor3), LossError> {
    if !features.same_shape(target) {
        return Err(NumericsError::ShapeMismatch {
            expected: target.shape(),
            found: features.shape(),
        }
        .into());
    }
    let mut grad = features.clone();
    grad.add_scaled(-1.0, target)?;
    let value = 0.5 * grad.data().iter().map(|d| d * d).sum::<f64>();
    Ok((value, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleLoss {
    /// `Σ_l w_l E_l`
    pub value: f64,
    /// Unweighted `E_l` per layer.
    pub per_layer: BTreeMap<String, f64>,
    /// `∂L_style/∂G_l` per layer.
    pub grads: BTreeMap<String, GramMatrix>,
}

/// `Σ_l w_l E_l` with `E_l = Σ (G − A)² / (4 N² M²)`.
///
/// Gradients treat every entry of `G` as an independent variable:
/// `∂/∂G = w_l (G − A) / (2 N² M²)`.
pub fn style_loss(
    grams_x: &GramSet,
    grams_a: &GramSet,
    layer_weights: &BTreeMap<String, f64>,
) -> Result<StyleLoss, LossError> {
    let mut value = 0.0;
    let mut per_layer = BTreeMap::new();
    let mut grads = BTreeMap::new();
    for (layer, &w) in layer_weights {
        let g = grams_x
            .get(layer)
            .ok_or_else(|| LossError::LayerMismatch(layer.clone()))?;
        let a = grams_a
            .get(layer)
            .ok_or_else(|| LossError::LayerMismatch(layer.clone()))?;
        if (g.n, g.m) != (a.n, a.m) {
            return Err(LossError::DimensionMismatch {
                layer: layer.clone(),
                expected: (a.n, a.m),
                found: (g.n, g.m),
            });
        }
        let nm2 = ((g.n * g.n) as f64) * ((g.m * g.m) as f64);
        let diff: Vec<f64> = g.data.iter().zip(&a.data).map(|(g, a)| g - a).collect();
        let e = diff.iter().map(|d| d * d).sum::<f64>() / (4.0 * nm2);
        value += w * e;
        per_layer.insert(layer.clone(), e);
        let scale = w / (2.0 * nm2);
        grads.insert(
            layer.clone(),
            GramMatrix {
                n: g.n,
                m: g.m,
                data: diff.into_iter().map(|d| d * scale).collect(),
            },
        );
    }
    Ok(StyleLoss {
        value,
        per_layer,
        grads,
    })
}

/// Chain rule through the Gram matrix: `∂L/∂F = (∂L/∂G + (∂L/∂G)ᵀ) F`.
pub fn style_grad_to_features(
    grad_gram: &GramMatrix,
    features: &Tensor3,
) -> Result<Tensor3, LossError> {
    let n = grad_gram.n;
    if features.channels() != n {
        return Err(NumericsError::ChannelMismatch {
            expected: n,
            found: features.channels(),
        }
        .into());
    }
    let m = features.plane_len();
    let mut out = vec![0.0; n * m];
    out.par_chunks_mut(m.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for j in 0..n {
                let coef = grad_gram.data[i * n + j] + grad_gram.data[j * n + i];
                if coef == 0.0 {
                    continue;
                }
                for (o, f) in row.iter_mut().zip(features.channel(j)) {
                    *o += coef * f;
                }
            }
        });
    Ok(Tensor3::new(n, features.height(), features.width(), out)?)
}

/// `½ Σ_{c,i,j} (Dⁿ_ij (p − x)_cij)²` with the field shared by all channels,
/// and its gradient `−(Dⁿ)² (p − x)` with respect to `x`.
pub fn distance_loss(
    content: &Tensor3,
    generated: &Tensor3,
    field: &DistanceField,
) -> Result<(f64, Tensor3), LossError> {
    content.check_same_shape(generated)?;
    let (h, w) = (content.height(), content.width());
    if (field.height(), field.width()) != (h, w) {
        return Err(LossError::FieldSize {
            expected: (h, w),
            found: (field.height(), field.width()),
        });
    }
    let d = field.values();
    let mut value = 0.0;
    let mut grad = Tensor3::zeros(content.channels(), h, w);
    for c in 0..content.channels() {
        let (p, x) = (content.channel(c), generated.channel(c));
        let g = grad.channel_mut(c);
        for i in 0..h * w {
            let diff = p[i] - x[i];
            let weighted = d[i] * diff;
            value += weighted * weighted;
            g[i] = -(d[i] * d[i]) * diff;
        }
    }
    Ok((0.5 * value, grad))
}

/// Weights of the three loss terms and of each style layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub style_layer_weights: BTreeMap<String, f64>,
    pub emphasis_power: u32,
}

impl LossWeights {
    /// Uniform weights `1 / L` over `style_layers`.
    pub fn new<S: AsRef<str>>(
        alpha: f64,
        beta: f64,
        gamma: f64,
        style_layers: &[S],
        emphasis_power: u32,
    ) -> Result<Self, LossError> {
        let uniform = 1.0 / style_layers.len().max(1) as f64;
        let weights = Self {
            alpha,
            beta,
            gamma,
            style_layer_weights: style_layers
                .iter()
                .map(|s| (s.as_ref().to_owned(), uniform))
                .collect(),
            emphasis_power,
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn style_layers(&self) -> impl Iterator<Item = &str> {
        self.style_layer_weights.keys().map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |msg: String| Err(LossError::InvalidWeights(msg));
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0 {
            return bad("at least one of alpha, beta, gamma must be positive".into());
        }
        if let Some((layer, w)) = self
            .style_layer_weights
            .iter()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return bad(format!("style weight of `{layer}` is {w}"));
        }
        if self.beta > 0.0 && self.style_layer_weights.is_empty() {
            return bad("beta is positive but no style layers are configured".into());
        }
        if self.emphasis_power < 1 {
            return bad("emphasis power must be at least 1".into());
        }
        Ok(())
    }
}

pub fn total_loss(content: f64, style: f64, distance: f64, w: &LossWeights) -> f64 {
    w.alpha * content + w.beta * style + w.gamma * distance
}

/// Loss components at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub content: f64,
    pub style: f64,
    pub per_layer: BTreeMap<String, f64>,
    pub distance: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(
        content: f64,
        style: f64,
        per_layer: BTreeMap<String, f64>,
        distance: f64,
        weights: &LossWeights,
    ) -> Self {
        Self {
            content,
            style,
            per_layer,
            distance,
            total: total_loss(content, style, distance, weights),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distancefield::{edt, BinaryMask};

    fn t(c: usize, h: usize, w: usize, v: &[f64]) -> Tensor3 {
        Tensor3::new(c, h, w, v.to_vec()).unwrap()
    }

    fn single(n: usize, m: usize, data: &[f64]) -> GramSet {
        let mut s = GramSet::new();
        s.insert("l".into(), GramMatrix::new(n, m, data.to_vec()).unwrap());
        s
    }

    fn unit_weight(layers: &[&str], w: f64) -> BTreeMap<String, f64> {
        layers.iter().map(|l| (l.to_string(), w)).collect()
    }

    #[test]
    fn gram_examples() {
        let g = gram(&t(2, 1, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(g.data(), &[5.0, 11.0, 11.0, 25.0]);
        assert_eq!((g.n(), g.m()), (2, 2));
        assert_eq!(gram(&Tensor3::zeros(3, 2, 2)).data(), &[0.0; 9]);
        assert_eq!(gram(&Tensor3::filled(1, 2, 2, 1.0)).data(), &[4.0]);
    }

    #[test]
    fn content_examples() {
        let f = t(1, 1, 3, &[1.0, -2.0, 0.5]);
        let (v, g) = content_loss(&f, &f).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
        let (v, g) = content_loss(&t(1, 1, 1, &[1.0]), &t(1, 1, 1, &[0.0])).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g.data(), &[1.0]);
        assert!(content_loss(&f, &Tensor3::zeros(1, 3, 1)).is_err());
    }

    #[test]
    fn style_examples() {
        let a = single(2, 3, &[1.0, 2.0, 2.0, 5.0]);
        let s = style_loss(&a, &a, &unit_weight(&["l"], 1.0)).unwrap();
        assert_eq!(s.value, 0.0);

        let s = style_loss(&single(1, 1, &[2.0]), &single(1, 1, &[0.0]), &unit_weight(&["l"], 1.0))
            .unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.per_layer["l"], 1.0);

        let mut gx = GramSet::new();
        let mut ga = GramSet::new();
        for name in ["a", "b"] {
            gx.insert(name.into(), GramMatrix::new(1, 1, vec![2.0]).unwrap());
            ga.insert(name.into(), GramMatrix::new(1, 1, vec![0.0]).unwrap());
        }
        let s = style_loss(&gx, &ga, &unit_weight(&["a", "b"], 0.5)).unwrap();
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn style_mismatches() {
        let w = unit_weight(&["l"], 1.0);
        assert!(matches!(
            style_loss(&single(1, 1, &[1.0]), &single(1, 2, &[1.0]), &w),
            Err(LossError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            style_loss(&GramSet::new(), &single(1, 1, &[1.0]), &w),
            Err(LossError::LayerMismatch(_))
        ));
    }

    #[test]
    fn style_grad_examples() {
        let f = t(2, 1, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let zero = GramMatrix::new(2, 3, vec![0.0; 4]).unwrap();
        assert!(style_grad_to_features(&zero, &f).unwrap().data().iter().all(|&v| v == 0.0));
        let eye = GramMatrix::new(2, 3, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(style_grad_to_features(&eye, &f).unwrap(), f.scaled(2.0));
        assert!(style_grad_to_features(&eye, &Tensor3::zeros(3, 1, 3)).is_err());
    }

    #[test]
    fn distance_examples() {
        let field = DistanceField::zeros(1, 1);
        let p = t(1, 1, 1, &[2.0]);
        let x = t(1, 1, 1, &[0.0]);
        let (v, g) = distance_loss(&p, &x, &field).unwrap();
        assert_eq!((v, g.data()[0]), (0.0, 0.0));

        // Field value 1 at the only pixel.
        let mask = BinaryMask::new(2, 1, vec![true, false]).unwrap();
        let field = edt(&mask).unwrap();
        let p = t(1, 1, 2, &[5.0, 2.0]);
        let x = t(1, 1, 2, &[-3.0, 0.0]);
        let (v, g) = distance_loss(&p, &x, &field).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(g.data(), &[-0.0, -2.0]);

        let (v, g) = distance_loss(&p, &p, &field).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn distance_field_size_checked() {
        let p = Tensor3::zeros(3, 2, 2);
        assert!(matches!(
            distance_loss(&p, &p, &DistanceField::zeros(3, 2)),
            Err(LossError::FieldSize { .. })
        ));
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::new(0.001, 1.0, 0.0, &["conv1_1"], 1).unwrap();
        assert!((total_loss(10.0, 1.0, 0.0, &w) - 1.01).abs() < 1e-15);
        let w = LossWeights::new(0.0, 0.0, 1.0, &["conv1_1"], 1).unwrap();
        assert_eq!(total_loss(0.0, 0.0, 5.0, &w), 5.0);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0, &["a"], 1).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0, &["a"], 1).is_err());
        assert!(LossWeights::new(0.0, 1.0, 0.0, &[] as &[&str], 1).is_err());
        assert!(LossWeights::new(0.0, 1.0, 0.0, &["a"], 0).is_err());
        let w = LossWeights::new(0.001, 1.0, 0.01, &DEFAULT_STYLE_LAYERS, 3).unwrap();
        assert_eq!(w.style_layer_weights.len(), 5);
        assert!(w.style_layer_weights.values().all(|&v| v == 0.2));
    }

    #[test]
    fn report_total_uses_same_arithmetic() {
        let w = LossWeights::new(0.001, 1.0, 0.37, &["a"], 2).unwrap();
        let r = LossReport::new(123.456, 7.89, BTreeMap::new(), 0.0123, &w);
        assert_eq!(r.total.to_bits(), total_loss(r.content, r.style, r.distance, &w).to_bits());
    }
}
