//! The work behind each subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dtstyle::distancefield::DistanceError;
use dtstyle::extractor::decode_weights;
use dtstyle::imageio::ImageIoError;
use dtstyle::optimizer::run_with_progress;
use dtstyle::{
    binarize, edt, emphasize, from_tensor, load_image, resize_bilinear, to_tensor, BinaryMask,
    DistanceField, Image, NetworkSpec, NetworkWeights, Problem, RunResult, Tensor3,
};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::grid;
use crate::manifest::RunManifest;

pub const FINAL_PNG: &str = "final.png";
pub const LOSS_CSV: &str = "loss.csv";
pub const MANIFEST_ECHO: &str = "manifest.txt";
pub const GRID_PNG: &str = "grid.png";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn require(what: &'static str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(what, path))
    }
}

fn image_error(what: &'static str, e: ImageIoError) -> CliError {
    match e {
        ImageIoError::Unreadable { path, .. } if !path.exists() => {
            CliError::InputMissing { what, path }
        }
        other => CliError::InputInvalid(format!("{what} image: {other}")),
    }
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

/// Reads and decodes a weights file, returning it with its sha256.
pub fn read_weights(path: &Path) -> Result<(NetworkWeights, String), CliError> {
    require("weights", path)?;
    let bytes = fs::read(path)
        .map_err(|e| CliError::Weights(format!("{}: {e}", path.display())))?;
    let weights = decode_weights(&bytes)
        .map_err(|e| CliError::Weights(format!("{}: {e}", path.display())))?;
    Ok((weights, sha256_hex(&bytes)))
}

fn load_square(what: &'static str, path: &Path, side: usize) -> Result<Image, CliError> {
    require(what, path)?;
    let img = load_image(path).map_err(|e| image_error(what, e))?;
    resize_bilinear(&img, side, side).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Binarizes `img` and builds its emphasized distance field.
pub fn build_field(
    img: &Image,
    threshold: f64,
    invert: bool,
    power: u32,
    normalize: bool,
) -> Result<(BinaryMask, DistanceField), CliError> {
    let mask = binarize(img, threshold, invert);
    let raw = edt(&mask).map_err(|e| match e {
        DistanceError::EmptyMask => CliError::InputInvalid(format!(
            "content image has no silhouette pixels at threshold {threshold} (invert = {invert})"
        )),
        other => CliError::Runtime(other.to_string()),
    })?;
    let field =
        emphasize(&raw, power, normalize).map_err(|e| CliError::BadArgs(e.to_string()))?;
    Ok((mask, field))
}

/// Everything a run needs, loaded and checked.
pub struct Prepared {
    pub manifest: RunManifest,
    pub weights: NetworkWeights,
    pub spec: NetworkSpec,
    pub content: Tensor3,
    pub style: Tensor3,
    pub field: DistanceField,
}

pub fn prepare(manifest: &RunManifest) -> Result<Prepared, CliError> {
    require("content", &manifest.content)?;
    require("style", &manifest.style)?;
    let (weights, sha) = read_weights(&manifest.weights)?;
    if let Some(expected) = &manifest.weights_sha256 {
        if !expected.eq_ignore_ascii_case(&sha) {
            return Err(CliError::Weights(format!(
                "{} hashes to {sha}, manifest expects {expected}",
                manifest.weights.display()
            )));
        }
    }
    let spec = NetworkSpec::for_weights(&weights)
        .map_err(|e| CliError::Weights(e.to_string()))?
        .with_pool_mode(manifest.pool);
    spec.validate(&weights)
        .map_err(|e| CliError::Weights(e.to_string()))?;

    let mut pools = 0;
    for layer in std::iter::once(&manifest.content_layer).chain(&manifest.style_layers) {
        let p = spec.pools_before(layer).ok_or_else(|| {
            CliError::Weights(format!(
                "{} has no layer `{layer}`",
                manifest.weights.display()
            ))
        })?;
        pools = pools.max(p);
    }
    if !manifest.resolution.is_multiple_of(1 << pools) {
        return Err(CliError::BadArgs(format!(
            "resolution {} must be a multiple of {} to reach the requested layers",
            manifest.resolution,
            1usize << pools
        )));
    }

    let side = manifest.resolution;
    let content_img = load_square("content", &manifest.content, side)?;
    let style_img = load_square("style", &manifest.style, side)?;
    let (_, field) = build_field(
        &content_img,
        manifest.threshold,
        manifest.invert,
        manifest.power,
        manifest.normalize_distance,
    )?;
    let prep = manifest.preprocess().expect("validated manifest");
    let mut echo = manifest.clone();
    echo.weights_sha256 = Some(sha);
    Ok(Prepared {
        manifest: echo,
        weights,
        spec,
        content: to_tensor(&content_img, &prep),
        style: to_tensor(&style_img, &prep),
        field,
    })
}

/// Runs the optimization without touching the filesystem.
pub fn optimize(prepared: &Prepared) -> Result<RunResult, CliError> {
    let m = &prepared.manifest;
    let loss_weights = m
        .loss_weights()
        .map_err(|e| CliError::BadArgs(e.to_string()))?;
    let problem = Problem {
        content: &prepared.content,
        style: &prepared.style,
        weights: &prepared.weights,
        spec: &prepared.spec,
        content_layer: &m.content_layer,
        loss_weights: &loss_weights,
        field: &prepared.field,
    };
    let every = m.snapshot_every.unwrap_or(50).max(1);
    run_with_progress(problem, &m.optim_config(), |i, report| {
        if (i + 1) % every == 0 || i == 0 {
            log::info!(
                "{}: iteration {i}: total {:.6e} (content {:.6e}, style {:.6e}, distance {:.6e})",
                m.out.display(),
                report.total,
                report.content,
                report.style,
                report.distance
            );
        }
    })
    .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn loss_csv(result: &RunResult) -> String {
    let mut s = String::from("iteration,content,style,distance,total\n");
    for (i, r) in result.trace.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", r.content, r.style, r.distance, r.total);
    }
    s
}

pub struct GenerateReport {
    pub final_png: PathBuf,
    pub result: RunResult,
    pub final_image: Image,
}

/// Writes the final PNG, snapshots, the loss CSV and the manifest echo.
pub fn generate(manifest: &RunManifest) -> Result<GenerateReport, CliError> {
    let prepared = prepare(manifest)?;
    let result = optimize(&prepared)?;
    let m = &prepared.manifest;
    let prep = m.preprocess().expect("validated manifest");
    let out = &m.out;
    fs::create_dir_all(out).map_err(|e| write_error(out, e))?;

    let save = |img: &Image, name: &str| -> Result<PathBuf, CliError> {
        let path = out.join(name);
        img.save_png(&path).map_err(|e| write_error(&path, e))?;
        Ok(path)
    };
    let to_image = |t: &Tensor3| from_tensor(t, &prep).map_err(|e| CliError::Runtime(e.to_string()));
    for snap in &result.snapshots {
        save(&to_image(&snap.image)?, &format!("snap_{:06}.png", snap.iteration))?;
    }
    let final_image = to_image(&result.final_image)?;
    let final_png = save(&final_image, FINAL_PNG)?;
    for (name, text) in [(LOSS_CSV, loss_csv(&result)), (MANIFEST_ECHO, m.to_text())] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| write_error(&path, e))?;
    }
    log::info!(
        "{}: total loss {:.6e} -> {:.6e}",
        out.display(),
        result.initial_total(),
        result.final_total()
    );
    Ok(GenerateReport {
        final_png,
        result,
        final_image,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Gamma,
    /// The ratio α/β, applied by scaling α with β held fixed.
    AlphaBeta,
    Power,
}

impl Axis {
    fn key(self) -> &'static str {
        match self {
            Axis::Gamma => "gamma",
            Axis::AlphaBeta => "alpha_beta",
            Axis::Power => "power",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::Gamma => "G",
            Axis::AlphaBeta => "A/B",
            Axis::Power => "N",
        }
    }

    /// A copy of `base` with this axis set to `value`, writing into `out`.
    pub fn apply(self, base: &RunManifest, value: f64, out: PathBuf) -> Result<RunManifest, CliError> {
        let mut m = base.clone();
        m.out = out;
        match self {
            Axis::Gamma => m.gamma = value,
            Axis::AlphaBeta => m.alpha = value * m.beta,
            Axis::Power => {
                if value.fract() != 0.0 || !(1.0..=f64::from(u32::MAX)).contains(&value) {
                    return Err(CliError::BadArgs(format!(
                        "power values must be whole numbers >= 1, got {value}"
                    )));
                }
                m.power = value as u32;
            }
        }
        m.validate()?;
        Ok(m)
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(Axis::Gamma),
            "alpha_beta" | "alpha-beta" => Ok(Axis::AlphaBeta),
            "power" => Ok(Axis::Power),
            other => Err(format!("unknown sweep axis `{other}` (gamma, alpha_beta, power)")),
        }
    }
}

pub struct SweepRun {
    pub value: f64,
    pub dir: PathBuf,
    pub report: GenerateReport,
}

/// One run per value, at most `jobs` at a time, each in its own
/// subdirectory of `base.out`, plus a labelled grid of the final images.
pub fn sweep(
    base: &RunManifest,
    axis: Axis,
    values: &[f64],
    jobs: usize,
) -> Result<Vec<SweepRun>, CliError> {
    if values.len() < 2 {
        return Err(CliError::BadArgs(format!(
            "a sweep needs at least 2 values, got {}",
            values.len()
        )));
    }
    let manifests = values
        .iter()
        .map(|&v| axis.apply(base, v, base.out.join(format!("{}_{v}", axis.key()))))
        .collect::<Result<Vec<_>, _>>()?;
    // Input problems are reported once, before any run starts.
    prepare(&manifests[0])?;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<GenerateReport, CliError>>>> =
        manifests.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, manifests.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(m) = manifests.get(i) else { break };
                let outcome = generate(m);
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });

    let mut runs = Vec::with_capacity(values.len());
    for ((slot, m), &value) in slots.into_iter().zip(&manifests).zip(values) {
        let report = slot
            .into_inner()
            .expect("slot lock")
            .expect("every slot is filled")?;
        runs.push(SweepRun {
            value,
            dir: m.out.clone(),
            report,
        });
    }
    let panels: Vec<(String, Image)> = runs
        .iter()
        .map(|r| (format!("{}={}", axis.label(), r.value), r.report.final_image.clone()))
        .collect();
    let path = base.out.join(GRID_PNG);
    grid::compose(&panels)
        .save_png(&path)
        .map_err(|e| write_error(&path, e))?;
    Ok(runs)
}

pub struct DebugRequest {
    pub content: PathBuf,
    pub out: PathBuf,
    pub threshold: f64,
    pub invert: bool,
    pub power: u32,
    pub normalize: bool,
    pub resolution: Option<usize>,
}

/// Writes `mask.png` and `distance.png` for a content image.
pub fn distance_debug(req: &DebugRequest) -> Result<(BinaryMask, DistanceField), CliError> {
    if !(0.0..=1.0).contains(&req.threshold) {
        return Err(CliError::BadArgs(format!(
            "threshold must lie in [0, 1], got {}",
            req.threshold
        )));
    }
    require("content", &req.content)?;
    let mut img = load_image(&req.content).map_err(|e| image_error("content", e))?;
    if let Some(side) = req.resolution {
        img = resize_bilinear(&img, side, side).map_err(|e| CliError::BadArgs(e.to_string()))?;
    }
    let (mask, field) = build_field(&img, req.threshold, req.invert, req.power, req.normalize)?;
    fs::create_dir_all(&req.out).map_err(|e| write_error(&req.out, e))?;
    for (name, img) in [("mask.png", mask.render()), ("distance.png", field.render())] {
        let path = req.out.join(name);
        img.save_png(&path).map_err(|e| write_error(&path, e))?;
    }
    Ok((mask, field))
}

/// A per-layer listing of a weights file and its sha256.
pub fn check_weights(path: &Path) -> Result<String, CliError> {
    let (weights, sha) = read_weights(path)?;
    NetworkSpec::for_weights(&weights)
        .and_then(|spec| spec.validate(&weights))
        .map_err(|e| CliError::Weights(e.to_string()))?;
    let mut s = String::new();
    for layer in weights.layers() {
        let _ = writeln!(
            s,
            "{} {}x{}x3x3",
            layer.name(),
            layer.out_channels(),
            layer.in_channels()
        );
    }
    let _ = writeln!(s, "layers {}", weights.len());
    let _ = writeln!(s, "sha256 {sha}");
    Ok(s)
}
