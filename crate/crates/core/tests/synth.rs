use std::collections::BTreeMap;

use proptest::prelude::*;

use scot_core::geometry::polygon_distance;
use scot_core::ingest::{footprints_to_geojson, FootprintSeries, UdmMask};
use scot_core::raster::rasterize_polygon;
use scot_core::scot::{score_aoi, AoiPair, ScoreConfig};
use scot_core::synth::{
    generate_dataset, generate_scene, perturb_proposals, render_cube, DatasetConfig, NoiseConfig, OriginShift,
    PerturbConfig, SceneConfig,
};
use scot_core::Error;

fn scene_cfg(seed: u64) -> SceneConfig {
    SceneConfig { seed, width: 128, height: 128, frames: 12, n_buildings: 60, ..Default::default() }
}

fn no_udms(frames: usize) -> Vec<UdmMask> {
    (0..frames).map(|frame| UdmMask { frame, obscured: vec![] }).collect()
}

fn score(gt: &FootprintSeries, props: &FootprintSeries, cfg: &ScoreConfig) -> scot_core::scot::ScoreReport {
    let pair = AoiPair { gt: gt.clone(), props: props.clone(), udms: no_udms(gt.frame_count()) };
    score_aoi(&pair, cfg).unwrap().report
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn placement_respects_gap_and_bounds(seed in any::<u64>(), rotate in any::<bool>(), gap in 1.0f64..6.0) {
        let cfg = SceneConfig { rotate, min_gap: gap, ..scene_cfg(seed) };
        let scene = generate_scene(&cfg, "s").unwrap();
        let polys: Vec<_> = scene.series.first_appearances().into_values().map(|f| f.polygon.clone()).collect();
        prop_assert_eq!(polys.len(), cfg.n_buildings);
        let need = gap / cfg.working_scale as f64;
        for (i, a) in polys.iter().enumerate() {
            let b = a.bbox();
            prop_assert!(b.min_x >= -1e-9 && b.min_y >= -1e-9);
            prop_assert!(b.max_x <= cfg.width as f64 + 1e-9 && b.max_y <= cfg.height as f64 + 1e-9);
            for q in &polys[i + 1..] {
                prop_assert!(polygon_distance(a, q) >= need - 1e-9);
            }
        }
    }

    #[test]
    fn origins_and_persistence(seed in any::<u64>()) {
        let cfg = scene_cfg(seed);
        let scene = generate_scene(&cfg, "s").unwrap();
        let [a, b] = cfg.window();
        let firsts = scene.series.first_appearances();
        for (id, &k) in &scene.origins {
            prop_assert!(k == 0 || (a..=b).contains(&k));
            prop_assert_eq!(firsts[id].frame, k);
            let present = (0..cfg.frames).filter(|&t| scene.series.frame(t).iter().any(|f| f.building_id == *id)).count();
            prop_assert_eq!(present, cfg.frames - k);
        }
    }
}

#[test]
fn same_seed_same_scene() {
    let a = generate_scene(&scene_cfg(3), "s").unwrap();
    let b = generate_scene(&scene_cfg(3), "s").unwrap();
    let c = generate_scene(&scene_cfg(4), "s").unwrap();
    let text = |s: &FootprintSeries| (0..s.frame_count()).map(|t| footprints_to_geojson(s.frame(t), "Id")).collect::<String>();
    assert_eq!(text(&a.series), text(&b.series));
    assert_ne!(text(&a.series), text(&c.series));
}

#[test]
fn infeasible_placement_is_reported() {
    let cfg = SceneConfig { width: 16, height: 16, n_buildings: 200, ..Default::default() };
    match generate_scene(&cfg, "s") {
        Err(Error::InfeasiblePlacement { placed, requested, .. }) => {
            assert!(placed < requested);
            assert_eq!(requested, 200);
        }
        other => panic!("expected infeasible placement, got {other:?}"),
    }
}

#[test]
fn empty_scene_renders() {
    let cfg = SceneConfig { n_buildings: 0, ..scene_cfg(1) };
    let scene = generate_scene(&cfg, "s").unwrap();
    let r = render_cube(&scene.series, &NoiseConfig::default(), 1).unwrap();
    assert!(r.cube.values().iter().all(|&v| v == 0.05));
}

#[test]
fn dataset_aoi_does_not_depend_on_count() {
    let small = DatasetConfig { n_aois: 2, scene: scene_cfg(0), noise: None, ..Default::default() };
    let large = DatasetConfig { n_aois: 4, ..small.clone() };
    let a = generate_dataset(&small).unwrap();
    let b = generate_dataset(&large).unwrap();
    assert_eq!(a[1].scene, b[1].scene);
    assert_eq!(b[3].aoi_id(), "synth_0003");
    for aoi in &b {
        let m = &aoi.scene.series.metadata;
        assert!((m.gsd - 4.8 * m.latitude.to_radians().cos()).abs() < 1e-12);
    }
}

#[test]
fn render_noise_statistics() {
    // Interior 0.7 with σ 0.1 keeps clamping negligible.
    let scene = generate_scene(&scene_cfg(9), "s").unwrap();
    let noise = NoiseConfig { interior_mean: 0.7, background_mean: 0.3, sigma: 0.1, ..Default::default() };
    let r = render_cube(&scene.series, &noise, 9).unwrap();
    let (w, h) = (128usize, 128usize);
    let mut inside = vec![false; w * h];
    for f in scene.series.frame(11) {
        for i in rasterize_polygon(&f.polygon, w, h, &Default::default()) {
            inside[i] = true;
        }
    }
    let plane = r.cube.frame(11);
    let (mut si, mut ni, mut sb, mut nb, mut ssi) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &v) in plane.iter().enumerate() {
        if inside[i] {
            si += v as f64;
            ssi += (v as f64 - 0.7).powi(2);
            ni += 1.0;
        } else {
            sb += v as f64;
            nb += 1.0;
        }
    }
    // Four standard errors.
    assert!((si / ni - 0.7).abs() < 4.0 * 0.1 / ni.sqrt(), "interior mean {}", si / ni);
    assert!((sb / nb - 0.3).abs() < 4.0 * 0.1 / nb.sqrt(), "background mean {}", sb / nb);
    assert!(((ssi / ni).sqrt() - 0.1).abs() < 0.01);
}

#[test]
fn seasonal_offset_shifts_frames() {
    let scene = generate_scene(&SceneConfig { n_buildings: 0, ..scene_cfg(2) }, "s").unwrap();
    let noise = NoiseConfig { background_mean: 0.4, seasonal_amplitude: 0.1, ..Default::default() };
    let r = render_cube(&scene.series, &noise, 2).unwrap();
    for t in 0..12 {
        let v = r.cube.frame(t)[0] as f64;
        assert!((v - (0.4 + noise.offset(t))).abs() < 1e-6);
    }
    assert!((noise.offset(3) - 0.1).abs() < 1e-12);
}

#[test]
fn clouds_are_invalid_and_listed() {
    let scene = generate_scene(&scene_cfg(5), "s").unwrap();
    let noise = NoiseConfig { cloud_count: 2, ..Default::default() };
    let r = render_cube(&scene.series, &noise, 5).unwrap();
    for (t, u) in r.udms.iter().enumerate() {
        assert_eq!(u.frame, t);
        let mut covered = vec![false; 128 * 128];
        for c in &u.obscured {
            for i in rasterize_polygon(c, 128, 128, &Default::default()) {
                covered[i] = true;
            }
        }
        let valid = r.cube.frame_valid(t);
        for i in 0..covered.len() {
            assert_eq!(valid[i], !covered[i]);
            if covered[i] {
                assert_eq!(r.cube.frame(t)[i], 0.05);
            }
        }
    }
    assert!(r.udms.iter().any(|u| !u.obscured.is_empty()));
}

/// Footprint count per building id.
fn lifetimes(s: &FootprintSeries) -> BTreeMap<u64, usize> {
    let mut m = BTreeMap::new();
    for f in s.footprints() {
        *m.entry(f.building_id).or_insert(0) += 1;
    }
    m
}

#[test]
fn drop_log_predicts_scores() {
    let gt = generate_scene(&scene_cfg(11), "s").unwrap();
    let (props, log) = perturb_proposals(&gt.series, &PerturbConfig { drop_rate: 0.3, ..Default::default() }, 1).unwrap();
    assert!(!log.dropped.is_empty());
    let life = lifetimes(&gt.series);
    let missing: usize = log.dropped.iter().map(|id| life[id]).sum();
    let new_dropped = log.dropped.iter().filter(|id| gt.origins[id] > 0).count() as u64;
    let new_total = gt.origins.values().filter(|&&k| k > 0).count() as u64;
    let r = score(&gt.series, &props, &ScoreConfig::default());
    assert_eq!((r.track.tp, r.track.fp, r.track.fn_), ((gt.series.len() - missing) as u64, 0, missing as u64));
    assert_eq!((r.change.tp, r.change.fp, r.change.fn_), (new_total - new_dropped, 0, new_dropped));
}

#[test]
fn swap_log_predicts_scores() {
    let gt = generate_scene(&scene_cfg(12), "s").unwrap();
    let (props, log) = perturb_proposals(&gt.series, &PerturbConfig { id_swap_rate: 0.4, ..Default::default() }, 2).unwrap();
    assert!(!log.swapped.is_empty());
    let frames = gt.series.frame_count();
    let switched: usize = log.swapped.iter().map(|&(_, _, s)| frames - s).sum();
    let r = score(&gt.series, &props, &ScoreConfig::default());
    let total = gt.series.len();
    assert_eq!((r.track.tp, r.track.fp, r.track.fn_), ((total - switched) as u64, switched as u64, switched as u64));
    // Each new id looks like an unmatched construction.
    let new_total = gt.origins.values().filter(|&&k| k > 0).count() as u64;
    assert_eq!((r.change.tp, r.change.fp, r.change.fn_), (new_total, log.swapped.len() as u64, 0));
    for &(old, new, s) in &log.swapped {
        for t in 0..frames {
            let ids: Vec<u64> = props.frame(t).iter().map(|f| f.building_id).collect();
            if t < s {
                assert!(!ids.contains(&new));
            } else {
                assert!(ids.contains(&new) && !ids.contains(&old));
            }
        }
    }
}

#[test]
fn shift_log_predicts_scores() {
    let gt = generate_scene(&scene_cfg(13), "s").unwrap();
    let cfg = PerturbConfig { origin_shift: OriginShift::Fixed { frames: 2 }, ..Default::default() };
    let (props, log) = perturb_proposals(&gt.series, &cfg, 3).unwrap();
    let new_total = gt.origins.values().filter(|&&k| k > 0).count() as u64;
    assert_eq!(log.shifted.len() as u64, new_total);
    let missing: usize = log.shifted.iter().map(|&(_, old, new)| new - old).sum();
    let r = score(&gt.series, &props, &ScoreConfig::default());
    assert_eq!((r.track.tp, r.track.fp, r.track.fn_), ((gt.series.len() - missing) as u64, 0, missing as u64));
    assert_eq!(r.change.tp, 0);
    let tolerant = ScoreConfig { tol_frames: 2, ..Default::default() };
    assert_eq!(score(&gt.series, &props, &tolerant).change.tp, new_total);
}

#[test]
fn perturbation_is_deterministic() {
    let gt = generate_scene(&scene_cfg(14), "s").unwrap();
    let cfg = PerturbConfig { drop_rate: 0.1, id_swap_rate: 0.1, vertex_jitter: 0.3, spurious_rate: 0.1, ..Default::default() };
    let a = perturb_proposals(&gt.series, &cfg, 5).unwrap();
    let b = perturb_proposals(&gt.series, &cfg, 5).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert!(!a.1.spurious.is_empty());
}
