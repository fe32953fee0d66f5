use pollisim::config::PipelineConfig;
use pollisim::fusion::{backproject, DepthView, FusionError, PointCloud};
use pollisim::geometry::{point_segment_distance, RigidTransform, Vec3};
use pollisim::pipeline::{self, exit, PipelineError};
use pollisim::synthetic::{plant_registry, Branched3, PlantGenerator, StraightStem, SyntheticPlant, YPlant};

fn surface_distance(plant: &SyntheticPlant, p: &Vec3) -> f64 {
    plant
        .branches
        .iter()
        .map(|b| (point_segment_distance(p, &plant.nodes[b.a], &plant.nodes[b.b]) - b.radius_m).abs())
        .fold(f64::INFINITY, f64::min)
}

fn reconstruct_volume(plant: &SyntheticPlant) -> pipeline::Reconstruction {
    let cfg = PipelineConfig::default();
    let cloud = plant.volume_cloud(cfg.skeleton.resolution_m / 2.0);
    pipeline::reconstruct(&cloud, &cfg.fusion, &cfg.skeleton).unwrap()
}

#[test]
fn straight_stem_reconstructs_to_one_segment() {
    let plant = StraightStem::default().generate();
    let rec = reconstruct_volume(&plant);
    let skel = &rec.skeleton;
    assert_eq!(skel.segments.len(), 1);
    let res = PipelineConfig::default().skeleton.resolution_m;
    let seg = &skel.segments[0];
    assert!((seg.length_m - 0.3).abs() < 4.0 * res, "length {}", seg.length_m);
    assert!(skel.root_node().xyz_m[2] < 2.0 * res);
    for p in seg.points() {
        assert!(plant.contains(&p), "skeleton point {p:?} outside the stem");
    }
}

#[test]
fn y_plant_reconstructs_to_a_single_junction() {
    let plant = YPlant::default().generate();
    let rec = reconstruct_volume(&plant);
    let skel = &rec.skeleton;
    assert_eq!(skel.segments.len(), 3);
    let degrees = skel.degrees();
    let junctions: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] == 3).collect();
    assert_eq!(junctions.len(), 1);
    let j = skel.nodes[junctions[0]].position();
    let res = PipelineConfig::default().skeleton.resolution_m;
    assert!((j - plant.nodes[1]).norm() < 5.0 * res, "junction at {j:?}");
    assert_eq!(skel.leaves().len(), 2);
}

#[test]
fn every_registered_plant_reconstructs_to_a_tree() {
    let registry = plant_registry();
    for name in registry.names() {
        let plant = registry.build_named(name).unwrap().generate();
        let rec = reconstruct_volume(&plant);
        rec.skeleton.validate().unwrap();
        assert_eq!(rec.skeleton.segments.len(), plant.branches.len(), "{name}");
    }
}

#[test]
fn rendered_view_backprojects_onto_the_surface() {
    let plant = YPlant::default().generate();
    let view = &plant.ring_views(4, 0.5, 200, 320)[1];
    let masked = view.mask().iter().filter(|&&m| m).count();
    let cloud = backproject(view).unwrap();
    assert!(masked > 500);
    assert_eq!(cloud.len(), masked);
    let depth_step = view.intrinsics.depth_scale;
    for p in cloud.points() {
        assert!(surface_distance(&plant, p) < 2.0 * depth_step, "{p:?}");
    }
}

#[test]
fn fused_ring_views_without_icp_stay_on_the_surface() {
    let plant = Branched3.generate();
    let views = plant.ring_views(4, 0.5, 200, 320);
    let mut cfg = PipelineConfig::default();
    cfg.fusion.icp = false;
    let fused = pipeline::fuse(&views, &cfg.fusion).unwrap();
    let per_view: usize = views.iter().map(|v| v.mask().iter().filter(|&&m| m).count()).sum();
    assert_eq!(fused.len(), per_view);
    let worst = fused.points().iter().map(|p| surface_distance(&plant, p)).fold(0.0, f64::max);
    assert!(worst < 2.0 * views[0].intrinsics.depth_scale, "worst surface distance {worst}");
}

#[test]
fn icp_pulls_a_misposed_repeat_view_back_onto_the_plant() {
    let plant = YPlant::default().generate();
    let view = plant.ring_views(4, 0.5, 200, 320).remove(0);
    let nudge = RigidTransform::from_axis_angle(Vec3::new(0.3, -0.2, 1.0), 1.5f64.to_radians(), Vec3::new(0.004, -0.003, 0.002));
    let misposed = DepthView::new(
        view.width(),
        view.height(),
        view.depth().to_vec(),
        view.mask().to_vec(),
        view.intrinsics,
        nudge.compose(&view.pose),
    )
    .unwrap();
    let n = view.mask().iter().filter(|&&m| m).count();
    let surface_rms = |cloud: &PointCloud| {
        let tail = &cloud.points()[n..];
        (tail.iter().map(|p| surface_distance(&plant, p).powi(2)).sum::<f64>() / tail.len() as f64).sqrt()
    };
    let mut cfg = PipelineConfig::default();
    cfg.fusion.icp = false;
    let raw = pipeline::fuse(&[view.clone(), misposed.clone()], &cfg.fusion).unwrap();
    cfg.fusion.icp = true;
    let refined = pipeline::fuse(&[view, misposed], &cfg.fusion).unwrap();
    let (before, after) = (surface_rms(&raw), surface_rms(&refined));
    assert!(before > 2e-3, "misposed view only {before} m off");
    assert!(after < 1e-3 && after < before / 10.0, "rms {before} -> {after}");
}

#[test]
fn y_plant_grasp_lands_on_the_trunk() {
    let plant = YPlant::default().generate();
    let cfg = PipelineConfig::default();
    let plan = pipeline::plan(&plant.ground_truth(), &cfg).unwrap();
    assert_eq!(plan.stem.segments, plant.main_stem);
    let p = Vec3::from(plan.pose.position_m);
    let axis = plant.main_stem_axis();
    let d = axis.iter().map(|(a, b)| point_segment_distance(&p, a, b)).fold(f64::INFINITY, f64::min);
    assert!(d < 1e-9, "grasp {p:?} is {d} m off the stem");
    let n = Vec3::from(plan.pose.approach);
    let stem = Vec3::from(plan.pose.stem_dir);
    assert!((n.norm() - 1.0).abs() < 1e-9);
    assert!(n.dot(&stem).abs() < 1e-6);
}

#[test]
fn demo_rig_records_grasp_and_flower() {
    let plant = YPlant::default().generate();
    let cfg = PipelineConfig::default();
    let (file, sim) = pipeline::plant_demo(&plant, &cfg).unwrap();
    let act = sim.actuation.as_ref().unwrap();
    assert_eq!(sim.record, vec![act.node, sim.record[1]]);
    let flower = Vec3::from(file.nodes[sim.record[1]]);
    assert!((flower - plant.nodes[plant.flower_node()]).norm() < 1e-12);
    let rig = pipeline::plant_rig(&plant.ground_truth(), plant.flower_node(), &cfg).unwrap();
    assert_eq!(rig.grasp_node, act.node);
}

#[test]
fn oversized_cloud_maps_to_the_resource_exit_code() {
    let mut pts = Vec::new();
    for i in 0..=200 {
        let t = i as f64 / 200.0;
        pts.push(Vec3::new(t, 0.0, 0.0));
    }
    let cloud = PointCloud::new(pts).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.fusion.dbscan_eps_m = Some(0.01);
    cfg.fusion.dbscan_min_pts = 2;
    cfg.fusion.downsample_cell_m = 0.001;
    cfg.skeleton.resolution_m = 0.001;
    let err = pipeline::reconstruct(&cloud, &cfg.fusion, &cfg.skeleton).unwrap_err();
    assert!(matches!(err, PipelineError::Fusion(FusionError::GridTooLarge { .. })), "{err}");
    assert_eq!(err.exit_code(), exit::RESOURCE_CAP);
}

#[test]
fn empty_skeleton_is_an_input_error_for_planning() {
    let mut skel = YPlant::default().generate().ground_truth();
    skel.segments.clear();
    let err = pipeline::plan(&skel, &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), exit::INPUT);
}

#[test]
fn partial_config_fills_defaults_and_rejects_unknown_keys() {
    let cfg = PipelineConfig::from_json(r#"{"schema_version": 1, "skeleton": {"resolution_m": 0.003}}"#).unwrap();
    let default = PipelineConfig::default();
    assert_eq!(cfg.skeleton.resolution_m, 0.003);
    assert_eq!(cfg.skeleton.knn_k, default.skeleton.knn_k);
    assert_eq!(cfg.fusion.downsample_cell_m, default.fusion.downsample_cell_m);
    assert!(PipelineConfig::from_json(r#"{"schema_version": 1, "skeleton": {"resolutoin_m": 0.003}}"#).is_err());
    assert!(PipelineConfig::from_json(r#"{"schema_version": 2}"#).is_err());
    let back = PipelineConfig::from_json(&default.to_json()).unwrap();
    assert_eq!(back.to_json(), default.to_json());
}
