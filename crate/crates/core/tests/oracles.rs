//! Brute-force oracles for the worked examples of each stage.

use std::collections::BTreeMap;

use flowagg_core::cam_fusion::{fuse_max, inverse_transform};
use flowagg_core::eval::ConfusionMatrix;
use flowagg_core::proxy_gt::background_mask;
use flowagg_core::synth::{render, ActivationModel, ObjectSpec, SceneSpec, Shape, SlicePattern};
use flowagg_core::temporal_filter::{pick_one_window, select_windows};
use flowagg_core::warp_aggregate::{aggregate_multiclass, aggregate_sequence, threshold_mask, warp};
use flowagg_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CAT: ClassId = ClassId(8);
const DOG: ClassId = ClassId(12);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_map(r: &mut ChaCha8Rng, class: ClassId, w: usize, h: usize) -> ActivationMap {
    ActivationMap::new(class, w, h, (0..w * h).map(|_| r.gen::<f32>()).collect()).unwrap()
}

#[test]
fn fuse_matches_per_pixel_loop() {
    let mut r = rng(1);
    let maps: Vec<_> = (0..5).map(|_| random_map(&mut r, CAT, 9, 7)).collect();
    let fused = fuse_max(&maps).unwrap();
    for y in 0..7 {
        for x in 0..9 {
            let mut best = f32::MIN;
            for m in &maps {
                if m.get(x, y) > best {
                    best = m.get(x, y);
                }
            }
            assert_eq!(fused.get(x, y), best);
        }
    }
}

#[test]
fn upscaled_constant_returns_constant() {
    let m = ActivationMap::filled(CAT, 20, 12, 0.7).unwrap();
    let tag = TransformTag::new(true, 2.0).unwrap();
    let out = inverse_transform(&m, tag, 10, 6).unwrap();
    let worst = out.values().iter().map(|v| (v - 0.7).abs()).fold(0.0, f32::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn threshold_and_background_match_loops() {
    let mut r = rng(2);
    let map = random_map(&mut r, CAT, 16, 11);
    let mask = threshold_mask(&map, 0.2);
    let sal = UnitRaster::new(16, 11, map.values().to_vec()).unwrap();
    let bg = background_mask(&sal, 0.12);
    for y in 0..11 {
        for x in 0..16 {
            assert_eq!(mask.get(x, y), map.get(x, y) >= 0.2);
            assert_eq!(bg.get(x, y), map.get(x, y) < 0.12);
        }
    }
}

#[test]
fn integer_shift_matches_index_arithmetic() {
    let (w, h) = (20, 9);
    let mask = ClassMask::from_fn(CAT, w, h, |x, y| (12..19).contains(&x) && (2..6).contains(&y)).unwrap();
    let flow = FlowField::uniform(w, h, 3.0, 0.0).unwrap();
    let out = warp(&mask, &flow, &AggregateConfig::default()).unwrap();
    for y in 0..h {
        for x in 0..w {
            let expect = x >= 3 && (12..19).contains(&(x - 3)) && (2..6).contains(&y);
            assert_eq!(out.get(x, y), if expect { 1.0 } else { 0.0 }, "({x},{y})");
        }
    }
}

#[test]
fn zero_flow_sequence_is_pixelwise_or() {
    let mut r = rng(3);
    let masks: Vec<_> = (0..5)
        .map(|_| ClassMask::from_fn(CAT, 12, 12, |_, _| r.gen_bool(0.2)).unwrap())
        .collect();
    let flows = vec![FlowField::zeros(12, 12).unwrap(); 4];
    let agg = aggregate_sequence(&masks, &flows, &AggregateConfig::default()).unwrap();
    for i in 0..144 {
        let any = masks.iter().any(|m| m.bits()[i]);
        assert_eq!(agg.bits()[i], any);
    }
}

fn moving_square(velocity: [f64; 2]) -> SceneSpec {
    SceneSpec {
        seed: 0,
        width: 64,
        height: 64,
        objects: vec![ObjectSpec {
            class_id: CAT,
            shape: Shape::Rectangle {
                width: 16.0,
                height: 16.0,
            },
            position: [8.0, 10.0],
            velocity,
        }],
        frames: 5,
        activation: ActivationModel {
            coverage: 0.2,
            pattern: SlicePattern::Rotating,
        },
        flow_noise_sigma: 0.0,
    }
}

fn aggregate_scene(scene: &flowagg_core::synth::Scene, class: ClassId) -> ClassMask {
    let masks: Vec<_> = scene.activations.iter().map(|f| threshold_mask(&f[&class], 0.2)).collect();
    aggregate_sequence(&masks, &scene.flows, &AggregateConfig::default()).unwrap()
}

#[test]
fn moving_square_slices_aggregate_to_full_square() {
    let scene = render(&moving_square([3.0, 2.0])).unwrap();
    let agg = aggregate_scene(&scene, CAT);
    assert_eq!(agg, scene.full_object_mask[&CAT]);

    // Subpixel motion: re-binarized bilinear splats gain or lose boundary
    // pixels each step, so only near-agreement is expected.
    for velocity in [[2.5, 0.0], [2.3, 1.7], [1.25, 0.75]] {
        let scene = render(&moving_square(velocity)).unwrap();
        let agg = aggregate_scene(&scene, CAT);
        let wrong = agg.disagreement(&scene.oracle_union[&CAT]).unwrap();
        let rate = wrong as f64 / (64.0 * 64.0);
        assert!(rate <= 0.01, "velocity {velocity:?}: {rate}");
    }
}

#[test]
fn two_class_scene_matches_single_class_oracles() {
    let mut spec = moving_square([2.0, 0.0]);
    spec.objects.push(ObjectSpec {
        class_id: DOG,
        shape: Shape::Disk { radius: 7.0 },
        position: [30.0, 48.0],
        velocity: [-1.0, -1.0],
    });
    let scene = render(&spec).unwrap();
    let per_class: BTreeMap<_, _> = scene
        .classes()
        .map(|c| {
            let masks: Vec<_> = scene.activations.iter().map(|f| threshold_mask(&f[&c], 0.2)).collect();
            (c, masks)
        })
        .collect();
    let out = aggregate_multiclass(&per_class, &scene.flows, &AggregateConfig::default()).unwrap();
    for c in [CAT, DOG] {
        assert_eq!(out[&c], scene.oracle_union[&c]);
        assert_eq!(out[&c], aggregate_scene(&scene, c));
    }
}

/// Every start whose next `k` label sets are equal, non-empty and contain
/// the search class.
fn brute_windows(labels: &[LabelSet], k: usize, search: ClassId) -> Vec<usize> {
    (0..labels.len())
        .filter(|&s| s + k <= labels.len())
        .filter(|&s| {
            let first = &labels[s];
            !first.is_empty() && first.contains(search) && labels[s..s + k].iter().all(|l| l == first)
        })
        .collect()
}

#[test]
fn windows_match_enumeration_on_cat_run() {
    let cat: LabelSet = [CAT].into_iter().collect();
    let mut labels = vec![LabelSet::new(); 12];
    for l in &mut labels[2..] {
        *l = cat.clone();
    }
    let cfg = FilterConfig::new(0.9, 5, CAT).unwrap();
    let starts: Vec<_> = select_windows(&labels, &cfg).iter().map(|w| w.start).collect();
    assert_eq!(starts, brute_windows(&labels, 5, CAT));

    // run of 9 qualifying frames gives 5 windows; the middle one starts 2 into the run
    let labels = vec![cat; 9];
    let w = select_windows(&labels, &cfg);
    assert_eq!(w.len(), brute_windows(&labels, 5, CAT).len());
    assert_eq!(pick_one_window(&w, PickPolicy::LongestRunCenter).unwrap().start, 2);
}

#[test]
fn confusion_counts_match_loop() {
    let mut r = rng(4);
    let n = 4;
    let gt = LabelMap::new(8, 8, (0..64).map(|_| if r.gen_bool(0.1) { IGNORE } else { r.gen_range(0..n as u8) }).collect()).unwrap();
    let pred = LabelMap::new(8, 8, (0..64).map(|_| r.gen_range(0..n as u8)).collect()).unwrap();
    let mut cm = ConfusionMatrix::new(n);
    cm.accumulate(&gt, &pred).unwrap();
    for g in 0..n {
        for p in 0..n {
            let mut count = 0;
            for i in 0..64 {
                if gt.labels()[i] == g as u8 && pred.labels()[i] == p as u8 {
                    count += 1;
                }
            }
            assert_eq!(cm.get(g, p), count);
        }
    }
}
