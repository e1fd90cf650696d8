//! Synthetic scenes with rigidly translating shapes, exact flow, sliced
//! partial activations and an analytic oracle for the aggregated mask.
//!
//! A pixel belongs to an object when its center `(x + 0.5, y + 0.5)` lies
//! inside the shape. Each object is cut into vertical slices in its own
//! coordinates, `r = 0` at the left edge and `r -> 1` at the right; frame `i`
//! activates the slice `[t0_i, t0_i + coverage)` modulo 1. The oracle marks a
//! final-frame pixel when its object coordinate fell in some frame's slice
//! and its path from that frame to the last stayed inside the image, which
//! is what zero-padded warping can carry forward.

use alloc::collections::btree_map::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cam_fusion::ActivationMap;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{ClassId, UnitRaster};
use crate::warp_aggregate::ClassMask;

const SLICE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Shape {
    /// `position` is the top-left corner.
    Rectangle { width: f64, height: f64 },
    /// `position` is the center.
    Disk { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectSpec {
    pub class_id: ClassId,
    pub shape: Shape,
    /// Pose in frame 0, pixels.
    pub position: [f64; 2],
    /// Translation per frame, pixels.
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SlicePattern {
    /// Frame `i` starts its slice at `i * coverage`.
    #[default]
    Rotating,
    /// Slice start drawn uniformly per frame.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActivationModel {
    pub coverage: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub pattern: SlicePattern,
}

impl Default for ActivationModel {
    fn default() -> Self {
        Self {
            coverage: 0.2,
            pattern: SlicePattern::Rotating,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<ObjectSpec>,
    pub frames: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub activation: ActivationModel,
    /// Standard deviation of i.i.d. Gaussian noise added to each flow
    /// component.
    #[cfg_attr(feature = "serde", serde(default))]
    pub flow_noise_sigma: f64,
}

/// Everything `render` produces. Per-frame vectors are indexed by frame;
/// `flows[i]` maps frame `i` to `i + 1`. Oracle masks live in the last
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub activations: Vec<BTreeMap<ClassId, ActivationMap>>,
    pub flows: Vec<FlowField>,
    pub saliency: Vec<UnitRaster>,
    /// Full per-class object masks for every frame.
    pub object_masks: Vec<BTreeMap<ClassId, ClassMask>>,
    pub oracle_union: BTreeMap<ClassId, ClassMask>,
    pub full_object_mask: BTreeMap<ClassId, ClassMask>,
}

impl Scene {
    pub fn frames(&self) -> usize {
        self.activations.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.full_object_mask.keys().copied()
    }
}

impl ObjectSpec {
    fn pose(&self, frame: usize) -> (f64, f64) {
        let t = frame as f64;
        (
            self.position[0] + t * self.velocity[0],
            self.position[1] + t * self.velocity[1],
        )
    }

    /// Object coordinate `r` in `[0, 1)` of a point, or `None` if outside.
    fn locate(&self, frame: usize, cx: f64, cy: f64) -> Option<f64> {
        let (px, py) = self.pose(frame);
        let (dx, dy) = (cx - px, cy - py);
        match self.shape {
            Shape::Rectangle { width, height } => {
                (dx >= 0.0 && dx < width && dy >= 0.0 && dy < height).then(|| dx / width)
            }
            Shape::Disk { radius } => {
                (dx * dx + dy * dy < radius * radius).then(|| (dx + radius) / (2.0 * radius))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slice {
    t0: f64,
    t1: f64,
}

impl Slice {
    fn contains(&self, r: f64) -> bool {
        let base = libm::floor(self.t0);
        [base, base + 1.0].iter().any(|m| {
            let s = r + m;
            s >= self.t0 && s < self.t1
        })
    }
}

impl SceneSpec {
    pub fn validate(&self) -> core::result::Result<(), Error> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidSpec(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{}", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        let cov = self.activation.coverage;
        if !(cov > 0.0 && cov <= 1.0) {
            return bad(format!("coverage {cov} outside (0, 1]"));
        }
        if !(self.flow_noise_sigma.is_finite() && self.flow_noise_sigma >= 0.0) {
            return bad(format!("flow_noise_sigma {}", self.flow_noise_sigma));
        }
        for (n, obj) in self.objects.iter().enumerate() {
            if !obj.class_id.is_foreground() {
                return bad(format!("object {n} has reserved class {}", obj.class_id));
            }
            let dims_ok = match obj.shape {
                Shape::Rectangle { width, height } => {
                    width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0
                }
                Shape::Disk { radius } => radius.is_finite() && radius > 0.0,
            };
            if !dims_ok || !obj.position.iter().chain(&obj.velocity).all(|v| v.is_finite()) {
                return bad(format!("object {n} has invalid geometry"));
            }
            for frame in 0..self.frames {
                if self.object_pixels(obj, frame) == 0 {
                    return bad(format!("object {n} leaves the image at frame {frame}"));
                }
            }
        }
        Ok(())
    }

    fn object_pixels(&self, obj: &ObjectSpec, frame: usize) -> usize {
        self.pixel_centers()
            .filter(|&(_, cx, cy)| obj.locate(frame, cx, cy).is_some())
            .count()
    }

    fn pixel_centers(&self) -> impl Iterator<Item = (usize, f64, f64)> {
        let w = self.width;
        (0..w * self.height).map(move |i| (i, (i % w) as f64 + 0.5, (i / w) as f64 + 0.5))
    }

    fn inside_image(&self, cx: f64, cy: f64) -> bool {
        cx >= 0.0 && cy >= 0.0 && cx < self.width as f64 && cy < self.height as f64
    }

    fn slices(&self) -> Vec<Slice> {
        let cov = self.activation.coverage;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(SLICE_STREAM);
        (0..self.frames)
            .map(|i| match self.activation.pattern {
                SlicePattern::Rotating => Slice {
                    t0: i as f64 * cov,
                    t1: (i + 1) as f64 * cov,
                },
                SlicePattern::Random => {
                    let t0: f64 = rng.gen();
                    Slice { t0, t1: t0 + cov }
                }
            })
            .collect()
    }

    /// Topmost (last listed) object covering a point.
    fn topmost(&self, frame: usize, cx: f64, cy: f64) -> Option<(&ObjectSpec, f64)> {
        self.objects
            .iter()
            .rev()
            .find_map(|o| o.locate(frame, cx, cy).map(|r| (o, r)))
    }

    fn classes(&self) -> Vec<ClassId> {
        let mut c: Vec<_> = self.objects.iter().map(|o| o.class_id).collect();
        c.sort();
        c.dedup();
        c
    }
}

pub fn render(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let last = spec.frames - 1;
    let slices = spec.slices();
    let classes = spec.classes();

    let mut activations = Vec::with_capacity(spec.frames);
    let mut saliency = Vec::with_capacity(spec.frames);
    let mut object_masks = Vec::with_capacity(spec.frames);
    for (frame, slice) in slices.iter().enumerate() {
        let mut per_class: BTreeMap<ClassId, Vec<f32>> =
            classes.iter().map(|&c| (c, alloc::vec![0.0; n])).collect();
        let mut objects: BTreeMap<ClassId, Vec<bool>> =
            classes.iter().map(|&c| (c, alloc::vec![false; n])).collect();
        let mut sal = alloc::vec![0.0f32; n];
        for (i, cx, cy) in spec.pixel_centers() {
            for obj in &spec.objects {
                if let Some(r) = obj.locate(frame, cx, cy) {
                    sal[i] = 1.0;
                    objects.get_mut(&obj.class_id).expect("class listed")[i] = true;
                    if slice.contains(r) {
                        per_class.get_mut(&obj.class_id).expect("class listed")[i] = 1.0;
                    }
                }
            }
        }
        activations.push(
            per_class
                .into_iter()
                .map(|(c, v)| Ok((c, ActivationMap::new(c, w, h, v)?)))
                .collect::<Result<BTreeMap<_, _>>>()?,
        );
        saliency.push(UnitRaster::new(w, h, sal)?);
        object_masks.push(to_masks(w, h, objects)?);
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(NOISE_STREAM);
    let noise = (spec.flow_noise_sigma > 0.0).then(|| {
        Normal::new(0.0, spec.flow_noise_sigma).expect("sigma validated finite and positive")
    });
    let mut flows = Vec::with_capacity(last);
    for frame in 0..last {
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for (_, cx, cy) in spec.pixel_centers() {
            let (mut du, mut dv) = spec
                .topmost(frame, cx, cy)
                .map_or((0.0, 0.0), |(o, _)| (o.velocity[0], o.velocity[1]));
            if let Some(dist) = &noise {
                du += dist.sample(&mut noise_rng);
                dv += dist.sample(&mut noise_rng);
            }
            u.push(du as f32);
            v.push(dv as f32);
        }
        flows.push(FlowField::new(w, h, u, v)?);
    }

    let mut oracle: BTreeMap<ClassId, Vec<bool>> =
        classes.iter().map(|&c| (c, alloc::vec![false; n])).collect();
    for (i, cx, cy) in spec.pixel_centers() {
        for obj in &spec.objects {
            let Some(r) = obj.locate(last, cx, cy) else {
                continue;
            };
            // Walk back from the last frame while the point stays in view.
            let mut reached = false;
            for frame in (0..=last).rev() {
                let back = (last - frame) as f64;
                let (px, py) = (cx - back * obj.velocity[0], cy - back * obj.velocity[1]);
                if !spec.inside_image(px, py) {
                    break;
                }
                if slices[frame].contains(r) {
                    reached = true;
                    break;
                }
            }
            if reached {
                oracle.get_mut(&obj.class_id).expect("class listed")[i] = true;
            }
        }
    }
    Ok(Scene {
        width: w,
        height: h,
        activations,
        flows,
        saliency,
        full_object_mask: object_masks[last].clone(),
        object_masks,
        oracle_union: to_masks(w, h, oracle)?,
    })
}

fn to_masks(
    w: usize,
    h: usize,
    m: BTreeMap<ClassId, Vec<bool>>,
) -> Result<BTreeMap<ClassId, ClassMask>> {
    m.into_iter()
        .map(|(c, bits)| Ok((c, ClassMask::new(c, w, h, bits)?)))
        .collect()
}

/// Fraction of `reference` pixels also set in `mask`; 1 for an empty reference.
pub fn recall(mask: &ClassMask, reference: &ClassMask) -> f64 {
    let total = reference.count();
    if total == 0 {
        return 1.0;
    }
    let hit = mask
        .bits()
        .iter()
        .zip(reference.bits())
        .filter(|(&a, &b)| a && b)
        .count();
    hit as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const CAT: ClassId = ClassId(8);

    fn square(velocity: [f64; 2], frames: usize, coverage: f64) -> SceneSpec {
        SceneSpec {
            seed: 7,
            width: 48,
            height: 32,
            objects: vec![ObjectSpec {
                class_id: CAT,
                shape: Shape::Rectangle {
                    width: 10.0,
                    height: 10.0,
                },
                position: [4.0, 6.0],
                velocity,
            }],
            frames,
            activation: ActivationModel {
                coverage,
                pattern: SlicePattern::Rotating,
            },
            flow_noise_sigma: 0.0,
        }
    }

    #[test]
    fn static_full_coverage() {
        let s = render(&square([0.0, 0.0], 3, 1.0)).unwrap();
        assert_eq!(s.oracle_union[&CAT], s.full_object_mask[&CAT]);
        assert_eq!(s.full_object_mask[&CAT].count(), 100);
        assert!(s.flows.iter().all(|f| f.u().iter().chain(f.v()).all(|&d| d == 0.0)));
        assert_eq!(s.flows.len(), 2);
    }

    #[test]
    fn five_rotating_slices_cover_object() {
        let s = render(&square([2.0, 0.0], 5, 0.2)).unwrap();
        assert_eq!(s.oracle_union[&CAT], s.full_object_mask[&CAT]);
        for frame in &s.activations {
            assert_eq!(frame[&CAT].values().iter().filter(|&&v| v == 1.0).count(), 20);
        }
        assert!(s.flows[0].u().iter().any(|&u| u == 2.0));
    }

    #[test]
    fn partial_oracle_is_slice_union() {
        let s = render(&square([1.0, 1.0], 2, 0.2)).unwrap();
        assert_eq!(s.oracle_union[&CAT].count(), 40);
    }

    #[test]
    fn deterministic_by_seed() {
        let mut spec = square([1.3, -0.4], 4, 0.3);
        spec.flow_noise_sigma = 0.5;
        spec.activation.pattern = SlicePattern::Random;
        assert_eq!(render(&spec).unwrap(), render(&spec).unwrap());
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(render(&spec).unwrap().flows, render(&other).unwrap().flows);
    }

    #[test]
    fn longer_scene_extends_shorter() {
        let mut spec = square([1.0, 0.0], 3, 0.2);
        spec.flow_noise_sigma = 1.0;
        spec.activation.pattern = SlicePattern::Random;
        let short = render(&spec).unwrap();
        spec.frames = 5;
        let long = render(&spec).unwrap();
        assert_eq!(short.flows[..], long.flows[..2]);
        assert_eq!(short.activations[..], long.activations[..3]);
    }

    #[test]
    fn invalid_specs() {
        let mut s = square([0.0, 0.0], 3, 0.0);
        assert!(matches!(render(&s), Err(Error::InvalidSpec(_))));
        s.activation.coverage = 0.5;
        s.objects[0].velocity = [30.0, 0.0];
        assert!(matches!(render(&s), Err(Error::InvalidSpec(_))));
        s.objects[0].velocity = [0.0, 0.0];
        s.frames = 0;
        assert!(render(&s).is_err());
        s.frames = 2;
        s.objects[0].class_id = ClassId(0);
        assert!(render(&s).is_err());
    }

    #[test]
    fn disk_geometry() {
        let mut s = square([0.0, 0.0], 1, 1.0);
        s.objects[0].shape = Shape::Disk { radius: 5.0 };
        s.objects[0].position = [20.0, 16.0];
        let scene = render(&s).unwrap();
        let area = scene.full_object_mask[&CAT].count() as f64;
        assert!((area - core::f64::consts::PI * 25.0).abs() < 10.0);
        assert_eq!(scene.saliency[0].values().iter().filter(|&&v| v == 1.0).count() as f64, area);
    }

    #[test]
    fn recall_basics() {
        let full = ClassMask::from_fn(CAT, 4, 1, |_, _| true).unwrap();
        let half = ClassMask::from_fn(CAT, 4, 1, |x, _| x < 2).unwrap();
        assert_eq!(recall(&half, &full), 0.5);
        assert_eq!(recall(&full, &ClassMask::empty(CAT, 4, 1).unwrap()), 1.0);
    }
}
