//! Writes rendered synthetic scenes to disk in the formats the other
//! commands read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, ensure, Context};
use flowagg_core::cam_fusion::apply_transform;
use flowagg_core::synth::{render, Scene, SceneSpec};
use flowagg_core::{ClassId, LabelMap, TransformTag, BACKGROUND};
use serde::{Deserialize, Serialize};

use crate::flow_io::write_flo;
use crate::manifest::{
    write_json, CamEntry, ClassNames, DatasetManifest, FrameEntry, FrameManifest, FrameScores,
    ScoreFile, VideoEntry,
};
use crate::raster_io::{write_activation, write_labels, write_mask, write_raster, Raster};

/// A single scene or a multi-video corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthSpec {
    Corpus(CorpusSpec),
    Scene(SceneSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// Class names, background first; defaults to PASCAL VOC.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    pub videos: Vec<VideoSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoSpec {
    pub video_id: String,
    pub search_class: String,
    pub scene: SceneSpec,
    /// Frames where the search class scores `dropout_score` instead of
    /// `present_score`.
    #[serde(default)]
    pub dropout_frames: Vec<usize>,
    #[serde(default = "default_present")]
    pub present_score: f32,
    #[serde(default = "default_absent")]
    pub absent_score: f32,
    #[serde(default = "default_dropout")]
    pub dropout_score: f32,
    /// Extra CAM copies written in transformed geometry next to the plain one.
    #[serde(default)]
    pub cam_variants: Vec<Variant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    #[serde(default)]
    pub flip: bool,
    #[serde(default = "default_scale")]
    pub scale: f32,
}

fn default_present() -> f32 {
    0.95
}
fn default_absent() -> f32 {
    0.02
}
fn default_dropout() -> f32 {
    0.5
}
fn default_scale() -> f32 {
    1.0
}

fn rel(p: &str) -> PathBuf {
    PathBuf::from(p)
}

/// Writes CAMs, saliency, reference labels, flows, oracle masks and
/// `frames.json` under `dir`.
pub fn write_scene(scene: &Scene, dir: &Path, variants: &[Variant]) -> anyhow::Result<FrameManifest> {
    for sub in ["cam", "sal", "gt", "flow", "oracle"] {
        fs::create_dir_all(dir.join(sub)).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut frames = Vec::with_capacity(scene.frames());
    for (f, acts) in scene.activations.iter().enumerate() {
        let mut entries = Vec::new();
        for (&c, map) in acts {
            let name = format!("cam/f{f:04}_c{:02}.png", c.0);
            write_activation(dir.join(&name), map)?;
            entries.push(CamEntry {
                class_id: c,
                flip: false,
                scale: 1.0,
                raster_path: rel(&name),
            });
            for v in variants {
                let tag = TransformTag::new(v.flip, v.scale)?;
                let name = format!(
                    "cam/f{f:04}_c{:02}_{}{}.png",
                    c.0,
                    if v.flip { "flip_" } else { "" },
                    v.scale
                );
                write_activation(dir.join(&name), &apply_transform(map, tag))?;
                entries.push(CamEntry {
                    class_id: c,
                    flip: v.flip,
                    scale: v.scale,
                    raster_path: rel(&name),
                });
            }
        }
        let sal = format!("sal/f{f:04}.png");
        write_raster(dir.join(&sal), &Raster::Unit(scene.saliency[f].clone()))?;
        let gt = format!("gt/f{f:04}.png");
        write_labels(dir.join(&gt), &reference_labels(scene, f)?)?;
        frames.push(FrameEntry {
            frame_id: f,
            entries,
            saliency_path: Some(rel(&sal)),
            gt_path: Some(rel(&gt)),
        });
    }
    let mut flows = Vec::with_capacity(scene.flows.len());
    for (i, flow) in scene.flows.iter().enumerate() {
        let name = format!("flow/f{i:04}.flo");
        write_flo(flow, dir.join(&name))?;
        flows.push(rel(&name));
    }
    for (c, m) in &scene.oracle_union {
        write_mask(dir.join(format!("oracle/union_c{:02}.png", c.0)), m)?;
        write_mask(dir.join(format!("oracle/full_c{:02}.png", c.0)), &scene.full_object_mask[c])?;
    }
    let manifest = FrameManifest {
        width: scene.width,
        height: scene.height,
        frames,
        flows,
    };
    write_json(&dir.join("frames.json"), &manifest)?;
    Ok(manifest)
}

/// Object classes over background; later classes win where objects overlap.
fn reference_labels(scene: &Scene, frame: usize) -> anyhow::Result<LabelMap> {
    let mut labels = vec![BACKGROUND; scene.width * scene.height];
    for (c, m) in &scene.object_masks[frame] {
        for (l, &on) in labels.iter_mut().zip(m.bits()) {
            if on {
                *l = c.0;
            }
        }
    }
    Ok(LabelMap::new(scene.width, scene.height, labels)?)
}

fn scores_for(video: &VideoSpec, scene: &Scene, classes: &ClassNames) -> anyhow::Result<ScoreFile> {
    let search = classes
        .id(&video.search_class)
        .ok_or_else(|| anyhow!("unknown search class {:?}", video.search_class))?;
    let frames = (0..scene.frames())
        .map(|f| {
            let present: BTreeMap<ClassId, bool> = scene.object_masks[f]
                .iter()
                .map(|(&c, m)| (c, m.count() > 0))
                .collect();
            let scores = classes.names()[1..]
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let c = ClassId(i as u8 + 1);
                    let s = if !present.get(&c).copied().unwrap_or(false) {
                        video.absent_score
                    } else if c == search && video.dropout_frames.contains(&f) {
                        video.dropout_score
                    } else {
                        video.present_score
                    };
                    (name.clone(), s)
                })
                .collect();
            FrameScores { frame_id: f, scores }
        })
        .collect();
    Ok(ScoreFile {
        video_id: video.video_id.clone(),
        frames,
        search_class: video.search_class.clone(),
    })
}

/// Renders every video into `out/<video_id>/` and writes `classes.txt` and
/// `dataset.json` at the top.
pub fn write_corpus(spec: &CorpusSpec, out: &Path) -> anyhow::Result<DatasetManifest> {
    let classes = match &spec.classes {
        Some(names) => ClassNames::new(names.clone()).map_err(|e| anyhow!(e))?,
        None => ClassNames::voc(),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("classes.txt"), classes.to_text())?;
    let mut videos = Vec::with_capacity(spec.videos.len());
    for video in &spec.videos {
        ensure!(
            !video.video_id.is_empty() && !video.video_id.contains(['/', '\\']),
            "bad video id {:?}",
            video.video_id
        );
        for o in &video.scene.objects {
            ensure!(
                classes.name(o.class_id).is_some(),
                "{}: class {} is not in the class list",
                video.video_id,
                o.class_id
            );
        }
        let scene = render(&video.scene).with_context(|| video.video_id.clone())?;
        let dir = out.join(&video.video_id);
        write_scene(&scene, &dir, &video.cam_variants)?;
        write_json(&dir.join("scores.json"), &scores_for(video, &scene, &classes)?)?;
        videos.push(VideoEntry {
            video_id: video.video_id.clone(),
            scores: PathBuf::from(&video.video_id).join("scores.json"),
            frames: PathBuf::from(&video.video_id).join("frames.json"),
        });
    }
    let manifest = DatasetManifest {
        classes: rel("classes.txt"),
        videos,
    };
    write_json(&out.join("dataset.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_synth(spec: &SynthSpec, out: &Path) -> anyhow::Result<()> {
    match spec {
        SynthSpec::Corpus(c) => write_corpus(c, out).map(drop),
        SynthSpec::Scene(s) => {
            let scene = render(s)?;
            write_scene(&scene, out, &[]).map(drop)
        }
    }
}
