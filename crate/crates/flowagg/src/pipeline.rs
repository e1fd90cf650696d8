//! End-to-end data path over a dataset manifest: filter frames by score,
//! fuse CAMs per frame, aggregate class masks along the flow, compose the
//! proxy label map, and optionally score it against reference labels.
//!
//! Videos fail independently; a bad video is recorded in the report and the
//! run continues. Outputs per video are `<video_id>.png` (VOC-indexed
//! labels) and `<video_id>.json`; the run writes `report.json`, which is
//! deterministic, and `timing.json`, which is not.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, ensure, Context};
use flowagg_core::cam_fusion::{fuse_max, inverse_transform};
use flowagg_core::eval::ConfusionMatrix;
use flowagg_core::proxy_gt::{background_mask, compose};
use flowagg_core::temporal_filter::{infer_labels, pick_one_window, select_windows};
use flowagg_core::warp_aggregate::{aggregate_multiclass, threshold_mask};
use flowagg_core::{
    ActivationMap, ClassId, ClassMask, FilterConfig, FlowField, LabelMap, LabelSet, PickPolicy,
    ScoreVector, TransformTag, Window, BACKGROUND, IGNORE,
};
use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::flow_io::read_flo;
use crate::manifest::{
    read_json, resolve, write_json, ClassNames, DatasetManifest, FrameManifest, ScoreFile,
    VideoEntry,
};
use crate::raster_io::{read_activation, read_labels, read_unit, write_labels, RasterKind};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub labels: Vec<LabelSet>,
    pub windows: Vec<Window>,
    pub picked: Option<Window>,
}

pub fn filter_scores(vectors: &[ScoreVector], cfg: &FilterConfig, policy: PickPolicy) -> FilterOutcome {
    let labels: Vec<LabelSet> = vectors.iter().map(|s| infer_labels(s, cfg.tau)).collect();
    let windows = select_windows(&labels, cfg);
    let picked = pick_one_window(&windows, policy);
    FilterOutcome {
        labels,
        windows,
        picked,
    }
}

/// Fuses every class of one frame. With `only`, classes outside the set are
/// skipped and listed classes without entries get an all-zero map.
pub fn fuse_frame(
    manifest_path: &Path,
    manifest: &FrameManifest,
    position: usize,
    only: Option<&LabelSet>,
) -> anyhow::Result<BTreeMap<ClassId, ActivationMap>> {
    let frame = &manifest.frames[position];
    let (w, h) = (manifest.width, manifest.height);
    let mut by_class: BTreeMap<ClassId, Vec<ActivationMap>> = BTreeMap::new();
    for entry in &frame.entries {
        if only.is_some_and(|s| !s.contains(entry.class_id)) {
            continue;
        }
        let tag = TransformTag::new(entry.flip, entry.scale)?;
        let path = resolve(manifest_path, &entry.raster_path);
        let expected = (tag.scaled_dim(w), tag.scaled_dim(h));
        let raw = read_activation(&path, entry.class_id, Some(expected))?;
        let map = inverse_transform(&raw, tag, w, h)
            .with_context(|| format!("inverse transform of {}", path.display()))?;
        by_class.entry(entry.class_id).or_default().push(map);
    }
    let mut fused = by_class
        .into_iter()
        .map(|(c, maps)| Ok((c, fuse_max(&maps)?)))
        .collect::<anyhow::Result<BTreeMap<_, _>>>()?;
    if let Some(set) = only {
        for c in set.iter() {
            if let Entry::Vacant(slot) = fused.entry(c) {
                debug!("frame {}: no CAM for class {c}, using an empty map", frame.frame_id);
                slot.insert(ActivationMap::filled(c, w, h, 0.0)?);
            }
        }
    }
    Ok(fused)
}

/// Position of `frame_id` in the manifest, checking that the following
/// `len - 1` entries continue the sequence and have flows.
fn locate_span(manifest: &FrameManifest, frame_id: usize, len: usize) -> anyhow::Result<usize> {
    let start = manifest
        .frames
        .iter()
        .position(|f| f.frame_id == frame_id)
        .ok_or_else(|| anyhow!("frame {frame_id} missing from frame manifest"))?;
    ensure!(start + len <= manifest.frames.len(), "frame manifest ends inside the window");
    for (n, f) in manifest.frames[start..start + len].iter().enumerate() {
        ensure!(f.frame_id == frame_id + n, "frame manifest is not contiguous at frame {}", f.frame_id);
    }
    ensure!(
        manifest.flows.len() + 1 >= start + len,
        "window needs flow {} but the manifest lists {}",
        start + len - 2,
        manifest.flows.len()
    );
    Ok(start)
}

/// Fuses and thresholds every frame in `start..start + len`, then runs the
/// per-class flow aggregation.
pub fn aggregate_span(
    manifest_path: &Path,
    manifest: &FrameManifest,
    start: usize,
    len: usize,
    classes: Option<&LabelSet>,
    cfg: &Config,
    timing: &mut StageTiming,
) -> anyhow::Result<BTreeMap<ClassId, ClassMask>> {
    let t = Instant::now();
    let fused: Vec<_> = (start..start + len)
        .map(|p| fuse_frame(manifest_path, manifest, p, classes))
        .collect::<anyhow::Result<_>>()?;
    timing.fuse += t.elapsed();

    let t = Instant::now();
    let all: BTreeSet<ClassId> = fused.iter().flat_map(|f| f.keys().copied()).collect();
    let (w, h) = (manifest.width, manifest.height);
    let mut per_class: BTreeMap<ClassId, Vec<ClassMask>> = BTreeMap::new();
    for &c in &all {
        let masks = fused
            .iter()
            .map(|f| match f.get(&c) {
                Some(m) => Ok(threshold_mask(m, cfg.theta_f)),
                None => ClassMask::empty(c, w, h),
            })
            .collect::<flowagg_core::Result<Vec<_>>>()?;
        per_class.insert(c, masks);
    }
    let flows: Vec<FlowField> = manifest.flows[start..start + len - 1]
        .iter()
        .map(|p| read_flo(resolve(manifest_path, p), cfg.nan_policy()))
        .collect::<Result<_, _>>()?;
    let out = aggregate_multiclass(&per_class, &flows, &cfg.aggregate())?;
    timing.aggregate += t.elapsed();
    Ok(out)
}

/// Wall-clock time per stage, summed over videos.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTiming {
    pub filter: Duration,
    pub fuse: Duration,
    pub aggregate: Duration,
    pub compose: Duration,
    pub eval: Duration,
    pub write: Duration,
}

impl StageTiming {
    fn add(&mut self, o: &StageTiming) {
        self.filter += o.filter;
        self.fuse += o.fuse;
        self.aggregate += o.aggregate;
        self.compose += o.compose;
        self.eval += o.eval;
        self.write += o.write;
    }

    fn to_json(self, total: Duration) -> serde_json::Value {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        serde_json::json!({
            "filter_ms": ms(self.filter),
            "fuse_ms": ms(self.fuse),
            "aggregate_ms": ms(self.aggregate),
            "compose_ms": ms(self.compose),
            "eval_ms": ms(self.eval),
            "write_ms": ms(self.write),
            "total_ms": ms(total),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VideoStatus {
    Emitted,
    /// No qualifying window; the video is dropped.
    Filtered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoReport {
    pub video_id: String,
    pub status: VideoStatus,
    pub windows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_start: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub label_set: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassIou {
    pub class: String,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub images: usize,
    pub pixels: u64,
    pub per_class: Vec<ClassIou>,
    pub mean_iou: f64,
}

impl EvalSummary {
    pub fn from_matrix(cm: &ConfusionMatrix, images: usize, classes: &ClassNames) -> flowagg_core::Result<Self> {
        let r = cm.miou()?;
        Ok(Self {
            images,
            pixels: cm.total(),
            per_class: r
                .per_class
                .iter()
                .enumerate()
                .map(|(c, &iou)| ClassIou {
                    class: classes.name(ClassId(c as u8)).unwrap_or("?").to_owned(),
                    iou,
                })
                .collect(),
            mean_iou: r.mean,
        })
    }

    pub fn table(&self) -> String {
        let width = self.per_class.iter().map(|c| c.class.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<width$}  {:>7}\n", "class", "IoU");
        for c in &self.per_class {
            let v = c.iou.map_or_else(|| "-".to_owned(), |v| format!("{:.4}", v));
            s += &format!("{:<width$}  {:>7}\n", c.class, v);
        }
        s += &format!("{:<width$}  {:>7.4}\n", "mean", self.mean_iou);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub videos_in: usize,
    pub videos_kept: usize,
    pub windows: usize,
    pub frames_emitted: usize,
    pub videos: Vec<VideoReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
    #[serde(skip)]
    pub timing: StageTiming,
}

impl RunReport {
    /// Every input video failed outright.
    pub fn total_failure(&self) -> bool {
        self.videos_in > 0 && self.videos.iter().all(|v| v.status == VideoStatus::Failed)
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    video_id: &'a str,
    window_start: usize,
    label_set: Vec<String>,
    config: &'a Config,
}

/// What a video got through before it finished or failed.
#[derive(Default)]
struct Progress {
    timing: StageTiming,
    windows: usize,
    picked: Option<usize>,
}

struct VideoResult {
    report: VideoReport,
    matrix: Option<ConfusionMatrix>,
    timing: StageTiming,
}

fn valid_video_id(id: &str) -> bool {
    !id.is_empty() && id != "report" && id != "timing" && id != "." && id != ".."
        && !id.contains(['/', '\\'])
}

fn process_video(
    dataset_path: &Path,
    video: &VideoEntry,
    classes: &ClassNames,
    cfg: &Config,
    out_dir: &Path,
    progress: &mut Progress,
) -> anyhow::Result<(VideoReport, Option<ConfusionMatrix>)> {
    ensure!(valid_video_id(&video.video_id), "video id {:?} is not usable as a file name", video.video_id);

    let t = Instant::now();
    let scores_path = resolve(dataset_path, &video.scores);
    let scores: ScoreFile = read_json(&scores_path)?;
    ensure!(
        scores.video_id == video.video_id,
        "score file is for video {:?}",
        scores.video_id
    );
    let (search, vectors) = scores.to_vectors(classes).map_err(|e| anyhow!("{}: {e}", scores_path.display()))?;
    let outcome = filter_scores(&vectors, &cfg.filter(search)?, cfg.pick_policy);
    progress.timing.filter += t.elapsed();
    progress.windows = outcome.windows.len();

    let Some(window) = outcome.picked else {
        info!("{}: no qualifying window, dropped", video.video_id);
        return Ok((
            VideoReport {
                video_id: video.video_id.clone(),
                status: VideoStatus::Filtered,
                windows: 0,
                window_start: None,
                label_set: Vec::new(),
                error: None,
            },
            None,
        ));
    };
    let window_start = vectors[window.start].frame_id();
    progress.picked = Some(window_start);
    let label_names: Vec<String> = window
        .label_set
        .iter()
        .map(|c| classes.name(c).unwrap_or("?").to_owned())
        .collect();

    let frames_path = resolve(dataset_path, &video.frames);
    let manifest: FrameManifest = read_json(&frames_path)?;
    let start = locate_span(&manifest, window_start, window.len)?;
    let agg = aggregate_span(&frames_path, &manifest, start, window.len, Some(&window.label_set), cfg, &mut progress.timing)?;

    let t = Instant::now();
    let last = &manifest.frames[start + window.len - 1];
    let dims = (manifest.width, manifest.height);
    let sal_path = last
        .saliency_path
        .as_ref()
        .ok_or_else(|| anyhow!("frame {} has no saliency map", last.frame_id))?;
    let saliency = read_unit(resolve(&frames_path, sal_path), RasterKind::Saliency, Some(dims))?;
    let bg = background_mask(&saliency, cfg.theta_b);
    let tie_scores: BTreeMap<ClassId, f32> = vectors[window.start + window.len - 1].scores().clone();
    let labels = compose(&agg, &bg, &cfg.background(), Some(&tie_scores))?;
    progress.timing.compose += t.elapsed();

    let t = Instant::now();
    let matrix = match &last.gt_path {
        Some(p) => {
            let gt = read_labels(resolve(&frames_path, p), Some(dims))?;
            let mut cm = ConfusionMatrix::new(classes.len());
            cm.accumulate(&gt, &ignore_as_background(&labels))?;
            Some(cm)
        }
        None => None,
    };
    progress.timing.eval += t.elapsed();

    let t = Instant::now();
    write_labels(out_dir.join(format!("{}.png", video.video_id)), &labels)?;
    write_json(
        &out_dir.join(format!("{}.json", video.video_id)),
        &Sidecar {
            video_id: &video.video_id,
            window_start,
            label_set: label_names.clone(),
            config: cfg,
        },
    )?;
    progress.timing.write += t.elapsed();
    info!("{}: emitted window at frame {window_start}", video.video_id);

    Ok((
        VideoReport {
            video_id: video.video_id.clone(),
            status: VideoStatus::Emitted,
            windows: outcome.windows.len(),
            window_start: Some(window_start),
            label_set: label_names,
            error: None,
        },
        matrix,
    ))
}

/// Proxy labels leave unresolved pixels as `IGNORE`; for scoring they count
/// as background.
pub fn ignore_as_background(labels: &LabelMap) -> LabelMap {
    let mapped = labels
        .labels()
        .iter()
        .map(|&l| if l == IGNORE { BACKGROUND } else { l })
        .collect();
    LabelMap::new(labels.width(), labels.height(), mapped).expect("same geometry")
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Bad configuration or unreadable dataset manifest; nothing ran.
    #[error("configuration error: {0:#}")]
    Config(anyhow::Error),
}

/// Runs every video of the dataset into `out_dir`.
pub fn run_pipeline(dataset_path: &Path, out_dir: &Path, cfg: &Config) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    cfg.validate().map_err(|e| PipelineError::Config(e.into()))?;
    let dataset: DatasetManifest = read_json(dataset_path).map_err(|e| PipelineError::Config(e.into()))?;
    let classes = ClassNames::read(&resolve(dataset_path, &dataset.classes)).map_err(|e| PipelineError::Config(e.into()))?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(PipelineError::Config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.into()))?;

    let mut seen = BTreeSet::new();
    let duplicate: Vec<bool> = dataset.videos.iter().map(|v| !seen.insert(v.video_id.as_str())).collect();

    let results: Vec<VideoResult> = pool.install(|| {
        dataset
            .videos
            .par_iter()
            .zip(duplicate.par_iter())
            .map(|(video, &dup)| {
                let mut progress = Progress::default();
                let outcome = if dup {
                    Err(anyhow!("duplicate video id"))
                } else {
                    process_video(dataset_path, video, &classes, cfg, out_dir, &mut progress)
                };
                match outcome {
                    Ok((report, matrix)) => VideoResult {
                        report,
                        matrix,
                        timing: progress.timing,
                    },
                    Err(e) => {
                        warn!("{}: {e:#}", video.video_id);
                        VideoResult {
                            report: VideoReport {
                                video_id: video.video_id.clone(),
                                status: VideoStatus::Failed,
                                windows: progress.windows,
                                window_start: progress.picked,
                                label_set: Vec::new(),
                                error: Some(format!("{e:#}")),
                            },
                            matrix: None,
                            timing: progress.timing,
                        }
                    }
                }
            })
            .collect()
    });

    let mut timing = StageTiming::default();
    let mut merged = ConfusionMatrix::new(classes.len());
    let mut evaluated = 0;
    for r in &results {
        timing.add(&r.timing);
        if let Some(cm) = &r.matrix {
            merged.merge(cm).expect("matrices share the class count");
            evaluated += 1;
        }
    }
    let videos: Vec<VideoReport> = results.into_iter().map(|r| r.report).collect();
    let eval = (evaluated > 0)
        .then(|| EvalSummary::from_matrix(&merged, evaluated, &classes).ok())
        .flatten();
    let report = RunReport {
        videos_in: videos.len(),
        videos_kept: videos.iter().filter(|v| v.window_start.is_some()).count(),
        windows: videos.iter().map(|v| v.windows).sum(),
        frames_emitted: videos.iter().filter(|v| v.status == VideoStatus::Emitted).count(),
        videos,
        eval,
        timing,
    };
    write_report(out_dir, &report, started.elapsed()).map_err(PipelineError::Config)?;
    Ok(report)
}

fn write_report(out_dir: &Path, report: &RunReport, total: Duration) -> anyhow::Result<()> {
    write_json(&out_dir.join("report.json"), report)?;
    write_json(&out_dir.join("timing.json"), &report.timing.to_json(total))?;
    Ok(())
}

/// Output paths a run produces for one video.
pub fn output_paths(out_dir: &Path, video_id: &str) -> (PathBuf, PathBuf) {
    (
        out_dir.join(format!("{video_id}.png")),
        out_dir.join(format!("{video_id}.json")),
    )
}
