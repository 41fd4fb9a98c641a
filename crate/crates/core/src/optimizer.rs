//! Iterative minimization of the total loss over the generated image's pixels.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::distancefield::DistanceField;
use crate::extractor::{
    backward_to_input, detach, forward, ExtractorError, NetworkSpec, NetworkWeights,
};
use crate::losses::{
    content_loss, distance_loss, gram_set, style_grad_to_features, style_loss, GramSet,
    LossError, LossReport, LossWeights,
};
use crate::numerics::{NumericsError, Tensor3};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub iterations: usize,
    /// Step size in preprocessed pixel units.
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Keep a copy of `x` every this many steps.
    pub snapshot_every: Option<usize>,
    /// Recorded with the run. The optimization itself is deterministic and
    /// draws no random numbers.
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 2.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            snapshot_every: Some(50),
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidConfig(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return bad(format!("adam_epsilon must be positive, got {}", self.adam_epsilon));
        }
        if self.snapshot_every == Some(0) {
            return bad("snapshot interval must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Shape(#[from] NumericsError),
}

/// Adam moment accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    first_moment: Tensor3,
    second_moment: Tensor3,
    step: u64,
}

impl OptimState {
    pub fn new(shape: (usize, usize, usize)) -> Self {
        let (c, h, w) = shape;
        Self {
            first_moment: Tensor3::zeros(c, h, w),
            second_moment: Tensor3::zeros(c, h, w),
            step: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }
}

/// The generated image starts as an exact copy of the content image.
pub fn init_generated(content: &Tensor3) -> Tensor3 {
    content.clone()
}

/// One bias-corrected Adam update: `x − lr · m̂ / (√v̂ + ε)`.
pub fn adam_step(
    x: &Tensor3,
    grad: &Tensor3,
    state: &mut OptimState,
    cfg: &OptimConfig,
) -> Result<Tensor3, OptimError> {
    x.check_same_shape(grad)?;
    x.check_same_shape(&state.first_moment)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let mut next = x.clone();
    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    for (i, (xi, &g)) in next.data_mut().iter_mut().zip(grad.data()).enumerate() {
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        *xi -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
    Ok(next)
}

/// Where a run failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStage {
    Setup,
    ContentPass,
    StylePass,
    Iteration(usize),
}

impl std::fmt::Display for RunStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStage::Setup => f.write_str("setup"),
            RunStage::ContentPass => f.write_str("content pass"),
            RunStage::StylePass => f.write_str("style pass"),
            RunStage::Iteration(i) => write!(f, "iteration {i}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("inputs do not match: {0}")]
    Mismatch(String),
    #[error("non-finite loss or gradient")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {source}")]
pub struct RunError {
    pub stage: RunStage,
    pub source: StepError,
}

impl RunError {
    fn at(stage: RunStage) -> impl FnOnce(StepError) -> RunError {
        move |source| RunError { stage, source }
    }
}

/// Everything a run optimizes against.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub content: &'a Tensor3,
    pub style: &'a Tensor3,
    pub weights: &'a NetworkWeights,
    pub spec: &'a NetworkSpec,
    pub content_layer: &'a str,
    pub loss_weights: &'a LossWeights,
    pub field: &'a DistanceField,
}

/// The total loss with its targets precomputed: content features of `p` at
/// the content layer and Gram matrices of the style image at the style layers.
pub struct Objective<'a> {
    problem: Problem<'a>,
    layers: Vec<String>,
    content_target: Tensor3,
    style_targets: GramSet,
}

impl<'a> Objective<'a> {
    pub fn new(problem: Problem<'a>) -> Result<Self, RunError> {
        let setup = RunError::at(RunStage::Setup);
        problem.loss_weights.validate().map_err(|e| setup(e.into()))?;
        problem
            .spec
            .validate(problem.weights)
            .map_err(|e| RunError::at(RunStage::Setup)(e.into()))?;
        if problem.content.shape() != problem.style.shape() {
            return Err(RunError::at(RunStage::Setup)(StepError::Mismatch(format!(
                "content is {:?} but style is {:?}",
                problem.content.shape(),
                problem.style.shape()
            ))));
        }
        let (_, h, w) = problem.content.shape();
        if (problem.field.height(), problem.field.width()) != (h, w) {
            return Err(RunError::at(RunStage::Setup)(StepError::Mismatch(format!(
                "distance field is {}x{} but images are {}x{}",
                problem.field.width(),
                problem.field.height(),
                w,
                h
            ))));
        }

        let content_trace = forward(
            problem.content,
            problem.weights,
            problem.spec,
            &[problem.content_layer],
        )
        .map_err(|e| RunError::at(RunStage::ContentPass)(e.into()))?;
        let content_target = detach(&content_trace)
            .get(problem.content_layer)
            .cloned()
            .expect("requested layer is present");
        drop(content_trace);

        let style_layers: Vec<&str> = problem.loss_weights.style_layers().collect();
        let style_targets = if style_layers.is_empty() {
            GramSet::new()
        } else {
            let trace = forward(problem.style, problem.weights, problem.spec, &style_layers)
                .map_err(|e| RunError::at(RunStage::StylePass)(e.into()))?;
            gram_set(detach(&trace).iter())
        };

        let mut layers: Vec<String> = style_layers.iter().map(|s| s.to_string()).collect();
        if !layers.iter().any(|l| l == problem.content_layer) {
            layers.push(problem.content_layer.to_owned());
        }
        Ok(Self {
            problem,
            layers,
            content_target,
            style_targets,
        })
    }

    pub fn problem(&self) -> &Problem<'a> {
        &self.problem
    }

    /// Loss components at `x` and the gradient of the total loss with respect to `x`.
    pub fn evaluate(&self, x: &Tensor3) -> Result<(LossReport, Tensor3), StepError> {
        let p = &self.problem;
        let w = p.loss_weights;
        let trace = forward(x, p.weights, p.spec, &self.layers)?;

        let features = trace
            .feature(p.content_layer)
            .expect("content layer requested");
        let (content, content_grad) = content_loss(features, &self.content_target)?;

        let grams = gram_set(
            w.style_layers()
                .map(|l| (l, trace.feature(l).expect("style layer requested"))),
        );
        let style = style_loss(&grams, &self.style_targets, &w.style_layer_weights)?;

        let mut layer_grads: BTreeMap<String, Tensor3> = BTreeMap::new();
        layer_grads.insert(p.content_layer.to_owned(), content_grad.scaled(w.alpha));
        for (layer, grad_gram) in &style.grads {
            let f = trace.feature(layer).expect("style layer requested");
            let g = style_grad_to_features(grad_gram, f)?;
            match layer_grads.get_mut(layer) {
                Some(existing) => existing.add_scaled(w.beta, &g)?,
                None => {
                    layer_grads.insert(layer.clone(), g.scaled(w.beta));
                }
            }
        }
        let mut grad = backward_to_input(&trace, &layer_grads)?;
        drop(trace);

        let (distance, distance_grad) = distance_loss(p.content, x, p.field)?;
        // With gamma = 0 the distance term must not touch the gradient at all.
        if w.gamma != 0.0 {
            grad.add_scaled(w.gamma, &distance_grad)?;
        }

        let report = LossReport::new(content, style.value, style.per_layer, distance, w);
        if !report.total.is_finite() || !grad.is_finite() {
            return Err(StepError::NonFinite);
        }
        Ok((report, grad))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// Number of update steps taken when the copy was made.
    pub iteration: usize,
    pub image: Tensor3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub final_image: Tensor3,
    /// Losses evaluated before each update, one per iteration.
    pub trace: Vec<LossReport>,
    pub snapshots: Vec<Snapshot>,
    pub content_layer: String,
    pub loss_weights: LossWeights,
    pub config: OptimConfig,
}

impl RunResult {
    pub fn initial_total(&self) -> f64 {
        self.trace.first().map_or(0.0, |r| r.total)
    }

    pub fn final_total(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.total)
    }
}

pub fn run(problem: Problem<'_>, cfg: &OptimConfig) -> Result<RunResult, RunError> {
    run_with_progress(problem, cfg, |_, _| {})
}

/// Like [`run`], calling `progress(iteration, losses)` after every evaluation.
pub fn run_with_progress(
    problem: Problem<'_>,
    cfg: &OptimConfig,
    mut progress: impl FnMut(usize, &LossReport),
) -> Result<RunResult, RunError> {
    cfg.validate()
        .map_err(|e| RunError::at(RunStage::Setup)(e.into()))?;
    let objective = Objective::new(problem)?;

    let mut x = init_generated(problem.content);
    let mut state = OptimState::new(x.shape());
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut snapshots = Vec::new();
    for iteration in 0..cfg.iterations {
        let fail = RunError::at(RunStage::Iteration(iteration));
        let (report, grad) = objective.evaluate(&x).map_err(fail)?;
        progress(iteration, &report);
        trace.push(report);
        x = adam_step(&x, &grad, &mut state, cfg)
            .map_err(|e| RunError::at(RunStage::Iteration(iteration))(e.into()))?;
        let done = iteration + 1;
        if cfg.snapshot_every.is_some_and(|k| done % k == 0) {
            snapshots.push(Snapshot {
                iteration: done,
                image: x.clone(),
            });
        }
    }
    Ok(RunResult {
        final_image: x,
        trace,
        snapshots,
        content_layer: problem.content_layer.to_owned(),
        loss_weights: problem.loss_weights.clone(),
        config: cfg.clone(),
    })
}
