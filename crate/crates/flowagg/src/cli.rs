//! Command-line front end. Exit codes: 0 success, 1 configuration or usage
//! error, 2 when the input could not be processed at all.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use flowagg_core::eval::ConfusionMatrix;
use flowagg_core::proxy_gt::{background_mask, compose};
use flowagg_core::ClassId;
use log::info;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::Config;
use crate::corpus::{write_synth, SynthSpec};
use crate::manifest::{read_json, write_json, ClassNames, FrameManifest, ScoreFile};
use crate::pipeline::{
    aggregate_span, filter_scores, fuse_frame, ignore_as_background, run_pipeline, EvalSummary,
    PipelineError, StageTiming,
};
use crate::raster_io::{read_labels, read_mask, read_unit, write_activation, write_labels, write_mask, RasterKind};

#[derive(Debug, Parser)]
#[command(name = "flowagg", version, about = "Flow-guided proxy segmentation labels from video frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

/// Overrides on top of `--config` (or the defaults).
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f32>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub theta_f: Option<f32>,
    #[arg(long)]
    pub theta_b: Option<f32>,
    /// forward-splat | backward-sample
    #[arg(long, value_parser = kebab::<flowagg_core::WarpMode>)]
    pub warp_mode: Option<flowagg_core::WarpMode>,
    #[arg(long)]
    pub binarize_threshold: Option<f32>,
    /// ignore | priority-by-score
    #[arg(long, value_parser = kebab::<flowagg_core::ConflictPolicy>)]
    pub conflict_policy: Option<flowagg_core::ConflictPolicy>,
    /// first | longest-run-center
    #[arg(long, value_parser = kebab::<flowagg_core::PickPolicy>)]
    pub pick_policy: Option<flowagg_core::PickPolicy>,
    /// all | non-overlapping
    #[arg(long, value_parser = kebab::<flowagg_core::WindowOverlap>)]
    pub window_overlap: Option<flowagg_core::WindowOverlap>,
    /// Zero-fill NaN/Inf flow vectors instead of rejecting the file.
    #[arg(long)]
    pub zero_fill_nan: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        take!(tau, k, theta_f, theta_b, warp_mode, binarize_threshold, conflict_policy, pick_policy, window_overlap, workers);
        cfg.zero_fill_nan |= self.zero_fill_nan;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Infer per-frame labels and list qualifying windows.
    Filter {
        #[arg(long, required = true, num_args = 1..)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        classes: PathBuf,
        /// JSON output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fuse transformed CAMs of every frame into one map per class.
    Fuse {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warp-and-union class masks through the frames of a manifest.
    Aggregate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First frame position to aggregate.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Number of frames; all remaining when absent.
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Combine class masks and a saliency map into a label image.
    Compose {
        /// CLASS_ID=PATH, repeatable.
        #[arg(long = "mask", required = true, value_parser = parse_pair::<PathBuf>)]
        masks: Vec<(u8, PathBuf)>,
        #[arg(long)]
        saliency: PathBuf,
        /// CLASS_ID=SCORE, used by priority-by-score.
        #[arg(long = "tie-score", value_parser = parse_pair::<f32>)]
        tie_scores: Vec<(u8, f32)>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Mean IoU of predicted label images against references.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long, default_value = "eval.json")]
        report: PathBuf,
        /// Score ignore-labeled prediction pixels as background.
        #[arg(long)]
        ignore_as_background: bool,
    },
    /// Render a synthetic scene or corpus.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, fuse, aggregate, compose and evaluate a whole dataset.
    Pipeline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(u8, T), String>
where
    T::Err: std::fmt::Display,
{
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected CLASS_ID=VALUE, got {s:?}"))?;
    let k: u8 = k.trim().parse().map_err(|e| format!("class id {k:?}: {e}"))?;
    let v = v.parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((k, v))
}

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Run(_) => 2,
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn run(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn run(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::Config(e) | Failure::Run(e)) = &f;
            eprintln!("error: {e:#}");
            f.exit_code()
        }
    }
}

#[derive(Serialize)]
struct FilterWindow {
    start_frame: usize,
    len: usize,
    label_set: Vec<String>,
}

#[derive(Serialize)]
struct FilterVideo {
    video_id: String,
    search_class: String,
    kept: bool,
    frame_labels: Vec<Vec<String>>,
    windows: Vec<FilterWindow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    picked: Option<FilterWindow>,
}

#[derive(Serialize)]
struct FilterReport {
    videos: Vec<FilterVideo>,
    dropped: Vec<String>,
}

fn names(classes: &ClassNames, set: impl Iterator<Item = ClassId>) -> Vec<String> {
    set.map(|c| classes.name(c).unwrap_or("?").to_owned()).collect()
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .run()
}

pub fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Filter { scores, classes, out, cfg } => {
            let cfg = cfg.resolve().config()?;
            let classes = ClassNames::read(&classes).config()?;
            let mut report = FilterReport {
                videos: Vec::new(),
                dropped: Vec::new(),
            };
            for path in &scores {
                let file: ScoreFile = read_json(path).run()?;
                let (search, vectors) = file
                    .to_vectors(&classes)
                    .map_err(|e| anyhow!("{}: {e}", path.display()))
                    .run()?;
                let outcome = filter_scores(&vectors, &cfg.filter(search).config()?, cfg.pick_policy);
                let first = vectors.first().map_or(0, |v| v.frame_id());
                let window = |w: &flowagg_core::Window| FilterWindow {
                    start_frame: first + w.start,
                    len: w.len,
                    label_set: names(&classes, w.label_set.iter()),
                };
                if outcome.picked.is_none() {
                    report.dropped.push(file.video_id.clone());
                }
                report.videos.push(FilterVideo {
                    video_id: file.video_id.clone(),
                    search_class: file.search_class.clone(),
                    kept: outcome.picked.is_some(),
                    frame_labels: outcome.labels.iter().map(|l| names(&classes, l.iter())).collect(),
                    windows: outcome.windows.iter().map(window).collect(),
                    picked: outcome.picked.as_ref().map(window),
                });
            }
            match out {
                Some(p) => write_json(&p, &report).run()?,
                None => println!("{}", serde_json::to_string_pretty(&report).expect("serializable")),
            }
            Ok(())
        }
        Command::Fuse { manifest, out } => {
            let m: FrameManifest = read_json(&manifest).run()?;
            ensure_dir(&out)?;
            let mut frames = Vec::with_capacity(m.frames.len());
            for (pos, frame) in m.frames.iter().enumerate() {
                let fused = fuse_frame(&manifest, &m, pos, None).run()?;
                let mut entries = Vec::new();
                for (c, map) in fused {
                    let name = format!("f{:04}_c{:02}.png", frame.frame_id, c.0);
                    write_activation(out.join(&name), &map).run()?;
                    entries.push(crate::manifest::CamEntry {
                        class_id: c,
                        flip: false,
                        scale: 1.0,
                        raster_path: PathBuf::from(name),
                    });
                }
                let keep = |p: &Option<PathBuf>| {
                    p.as_ref().map(|p| crate::manifest::resolve(&manifest, p)).map(|p| fs::canonicalize(&p).unwrap_or(p))
                };
                frames.push(crate::manifest::FrameEntry {
                    frame_id: frame.frame_id,
                    entries,
                    saliency_path: keep(&frame.saliency_path),
                    gt_path: keep(&frame.gt_path),
                });
            }
            let flows = m
                .flows
                .iter()
                .map(|p| {
                    let p = crate::manifest::resolve(&manifest, p);
                    fs::canonicalize(&p).unwrap_or(p)
                })
                .collect();
            let fused = FrameManifest {
                width: m.width,
                height: m.height,
                frames,
                flows,
            };
            write_json(&out.join("frames.json"), &fused).run()?;
            info!("fused {} frames into {}", fused.frames.len(), out.display());
            Ok(())
        }
        Command::Aggregate { manifest, out, start, frames, cfg } => {
            let cfg = cfg.resolve().config()?;
            let m: FrameManifest = read_json(&manifest).run()?;
            let len = frames.unwrap_or_else(|| m.frames.len().saturating_sub(start));
            if len == 0 || start + len > m.frames.len() {
                return Err(Failure::Config(anyhow!(
                    "frames {start}..{} outside the manifest's {} frames",
                    start + len,
                    m.frames.len()
                )));
            }
            if m.flows.len() + 1 < start + len {
                return Err(Failure::Run(anyhow!("manifest lists {} flows, need {}", m.flows.len(), start + len - 1)));
            }
            let mut timing = StageTiming::default();
            let masks = aggregate_span(&manifest, &m, start, len, None, &cfg, &mut timing).run()?;
            ensure_dir(&out)?;
            let mut summary = BTreeMap::new();
            for (c, mask) in &masks {
                write_mask(out.join(format!("mask_c{:02}.png", c.0)), mask).run()?;
                summary.insert(c.0.to_string(), mask.count());
            }
            let last = m.frames[start + len - 1].frame_id;
            write_json(
                &out.join("aggregate.json"),
                &serde_json::json!({ "final_frame": last, "frames": len, "pixels": summary }),
            )
            .run()?;
            Ok(())
        }
        Command::Compose { masks, saliency, tie_scores, out, cfg } => {
            let cfg = cfg.resolve().config()?;
            let sal = read_unit(&saliency, RasterKind::Saliency, None).run()?;
            let mut agg = BTreeMap::new();
            for (c, path) in &masks {
                let c = ClassId(*c);
                if !c.is_foreground() {
                    return Err(Failure::Config(anyhow!("class id {c} is reserved")));
                }
                agg.insert(c, read_mask(path, c, Some(sal.dims())).run()?);
            }
            let scores: BTreeMap<ClassId, f32> = tie_scores.iter().map(|&(c, s)| (ClassId(c), s)).collect();
            let bg = background_mask(&sal, cfg.theta_b);
            let labels = compose(&agg, &bg, &cfg.background(), (!scores.is_empty()).then_some(&scores)).config()?;
            write_labels(&out, &labels).run()?;
            Ok(())
        }
        Command::Eval { gt, pred, classes, report, ignore_as_background: relabel } => {
            let classes = ClassNames::read(&classes).config()?;
            let summary = evaluate_dirs(&gt, &pred, &classes, relabel).run()?;
            print!("{}", summary.table());
            write_json(&report, &summary).run()?;
            Ok(())
        }
        Command::Synth { spec, out } => {
            let spec: SynthSpec = read_json(&spec).config()?;
            write_synth(&spec, &out).run()
        }
        Command::Pipeline { dataset, out, cfg } => {
            let cfg = cfg.resolve().config()?;
            let report = run_pipeline(&dataset, &out, &cfg).map_err(|PipelineError::Config(e)| Failure::Config(e))?;
            info!(
                "videos in {}, kept {}, windows {}, emitted {}",
                report.videos_in, report.videos_kept, report.windows, report.frames_emitted
            );
            if report.total_failure() {
                return Err(Failure::Run(anyhow!("no video could be processed")));
            }
            Ok(())
        }
    }
}

/// Scores every `*.png` in `gt` against the same-named file in `pred`.
/// Per-image matrices are built in parallel and summed.
pub fn evaluate_dirs(gt: &Path, pred: &Path, classes: &ClassNames, relabel: bool) -> anyhow::Result<EvalSummary> {
    let mut names: Vec<PathBuf> = fs::read_dir(gt)
        .with_context(|| format!("reading {}", gt.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no .png reference labels in {}", gt.display());
    }
    let matrices: Vec<ConfusionMatrix> = names
        .par_iter()
        .map(|g| {
            let file = g.file_name().expect("listed file");
            let reference = read_labels(g, None)?;
            let p = pred.join(file);
            let mut predicted = read_labels(&p, Some(reference.dims()))?;
            if relabel {
                predicted = ignore_as_background(&predicted);
            }
            let mut cm = ConfusionMatrix::new(classes.len());
            cm.accumulate(&reference, &predicted).with_context(|| p.display().to_string())?;
            Ok(cm)
        })
        .collect::<anyhow::Result<_>>()?;
    let mut total = ConfusionMatrix::new(classes.len());
    for cm in &matrices {
        total.merge(cm)?;
    }
    Ok(EvalSummary::from_matrix(&total, matrices.len(), classes)?)
}
