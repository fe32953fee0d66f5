use nalgebra::{DVector, Rotation3};
use pollisim::bench::{self, CantileverSetup};
use pollisim::dersim::checks::{check_derivatives, length_scale, perturbed_state};
use pollisim::dersim::{
    self, Actuation, Bend, ElasticModel, ElasticState, ElasticTerm, MaterialParams, RodEdge, RodNetwork, SimConfig, Simulator,
    Stretch,
};
use pollisim::geometry::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn branched_network() -> RodNetwork {
    let nodes = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.0, 0.0, 0.05),
        Vec3::new(0.002, 0.0, 0.1),
        Vec3::new(0.03, 0.0, 0.13),
        Vec3::new(0.06, 0.01, 0.15),
        Vec3::new(-0.02, 0.0, 0.15),
        Vec3::new(-0.03, 0.01, 0.2),
        Vec3::new(0.0, -0.03, 0.12),
    ];
    let e = |a, b, r| RodEdge { a, b, radius_m: r };
    let edges = vec![
        e(0, 1, 0.004),
        e(1, 2, 0.004),
        e(2, 3, 0.003),
        e(3, 4, 0.003),
        e(2, 5, 0.0025),
        e(5, 6, 0.0025),
        e(2, 7, 0.002),
    ];
    RodNetwork::new(nodes, edges, MaterialParams::default()).unwrap()
}

fn single_term(term: Box<dyn ElasticTerm>) -> ElasticModel {
    ElasticModel::new(vec![term])
}

#[test]
fn rest_state_has_no_energy_or_force() {
    let net = branched_network();
    let model = ElasticModel::default();
    let state = ElasticState::at_rest(&net);
    assert!(model.energy(&net, &state.q, &state.frames).unwrap().abs() < 1e-20);
    let f = model.force(&net, &state.q, &state.frames).unwrap();
    assert!(f.amax() < 1e-9, "{}", f.amax());
}

#[test]
fn one_percent_stretch_energy() {
    let net = RodNetwork::straight(Vec3::zeros(), Vec3::new(0.0, 0.0, 0.2), 2, 0.003, MaterialParams::default()).unwrap();
    let mut state = ElasticState::at_rest(&net);
    let top = state.node(2);
    let mid = state.node(1);
    state.set_node(2, &(mid + (top - mid) * 1.01));
    let e = single_term(Box::new(Stretch)).energy(&net, &state.q, &state.frames).unwrap();
    let ea = net.material().axial_stiffness(0.003);
    let expected = 0.5 * ea * 1e-4 * 0.1;
    assert!((e - expected).abs() < 1e-9 * expected, "{e} vs {expected}");
}

#[test]
fn right_angle_bend_energy() {
    // E·πr⁴/4 = 1 gives EI = 1 with unit edges and unit Voronoi length
    let young = 1e4;
    let radius = (4.0 / (std::f64::consts::PI * young)).powf(0.25);
    let mat = MaterialParams {
        young_modulus: young,
        density: 1.0,
        damping: 0.5,
    };
    let net = RodNetwork::straight(Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), 2, radius, mat).unwrap();
    assert!((net.springs()[0].bending_stiffness - 1.0).abs() < 1e-12);
    assert!((net.springs()[0].voronoi_length - 1.0).abs() < 1e-15);
    let mut state = ElasticState::at_rest(&net);
    state.set_node(2, &Vec3::new(1.0, 1.0, 0.0));
    let e = single_term(Box::new(Bend)).energy(&net, &state.q, &state.frames).unwrap();
    assert!((e - 2.0).abs() < 1e-11, "{e}");
}

#[test]
fn forces_and_jacobians_match_finite_differences() {
    let net = branched_network();
    let h = 1e-6 * length_scale(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let models: [(&str, ElasticModel); 3] = [
        ("stretch", single_term(Box::new(Stretch))),
        ("bend", single_term(Box::new(Bend))),
        ("both", ElasticModel::default()),
    ];
    for _ in 0..20 {
        let (q, frames) = perturbed_state(&net, 0.05, &mut rng);
        for (name, model) in &models {
            let c = check_derivatives(model, &net, &q, &frames, h).unwrap();
            assert!(c.force_rel_err < 1e-6, "{name}: force {c:?}");
            assert!(c.jacobian_rel_err < 1e-4, "{name}: jacobian {c:?}");
            assert!(c.asymmetry < 1e-8, "{name}: asymmetry {c:?}");
        }
    }
}

#[test]
fn negated_force_is_caught() {
    let net = branched_network();
    let model = ElasticModel::new(vec![Box::new(dersim::NegatedForce(Box::new(Stretch))), Box::new(Bend)]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (q, frames) = perturbed_state(&net, 0.05, &mut rng);
    let c = check_derivatives(&model, &net, &q, &frames, 1e-6 * length_scale(&net)).unwrap();
    assert!(c.force_rel_err > 1.0);
}

#[test]
fn energy_is_invariant_under_rigid_motion() {
    let net = branched_network();
    let model = ElasticModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..10 {
        let (q, frames) = perturbed_state(&net, 0.05, &mut rng);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(0.3, -1.0, 0.4 + k as f64)), 0.3 + 0.5 * k as f64);
        let shift = Vec3::new(0.1, -2.0, 0.7);
        let mut q2 = q.clone();
        for i in 0..net.node_count() {
            let p = rot * Vec3::new(q[3 * i], q[3 * i + 1], q[3 * i + 2]) + shift;
            q2.fixed_rows_mut::<3>(3 * i).copy_from(&p);
        }
        let frames2: Vec<_> = frames
            .iter()
            .map(|f| dersim::EdgeFrame::new(rot * f.tangent, rot * f.m1))
            .collect();
        let e1 = model.energy(&net, &q, &frames).unwrap();
        let e2 = model.energy(&net, &q2, &frames2).unwrap();
        assert!((e1 - e2).abs() < 1e-10 * e1.max(1.0), "{e1} vs {e2}");
    }
}

#[test]
fn state_has_exactly_three_dofs_per_node() {
    let net = branched_network();
    let state = ElasticState::at_rest(&net);
    assert_eq!(state.q.len(), 3 * net.node_count());
    assert_eq!(state.v.len(), 3 * net.node_count());
}

#[test]
fn rest_is_a_fixed_point_without_gravity() {
    let net = branched_network();
    let model = ElasticModel::default();
    let config = SimConfig {
        gravity_on: false,
        duration_s: 0.05,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(&net, &model, &config).unwrap();
    let q0 = sim.state.q.clone();
    for _ in 0..50 {
        sim.step().unwrap();
    }
    assert!((&sim.state.q - q0).amax() < 1e-12);
}

#[test]
fn zero_amplitude_matches_clamped_bit_for_bit() {
    let net = branched_network();
    let model = ElasticModel::default();
    let base = SimConfig {
        duration_s: 0.1,
        record: (0..net.node_count()).collect(),
        ..SimConfig::default()
    };
    let actuated = SimConfig {
        actuation: Some(Actuation::new(2, Vec3::x(), 0.0, 5.0)),
        ..base.clone()
    };
    let clamped = SimConfig {
        pinned_nodes: vec![2],
        ..base
    };
    let a = dersim::run(&net, &model, &actuated).unwrap();
    let b = dersim::run(&net, &model, &clamped).unwrap();
    assert_eq!(a.series, b.series);
}

#[test]
fn frames_stay_orthonormal_while_vibrating() {
    let net = branched_network();
    let model = ElasticModel::default();
    let config = SimConfig {
        actuation: Some(Actuation::new(2, Vec3::new(1.0, 1.0, 0.0), 0.005, 5.0)),
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(&net, &model, &config).unwrap();
    sim.settle(None).unwrap();
    sim.start_actuation();
    for _ in 0..300 {
        sim.step().unwrap();
        assert!(sim.state.frame_error(&net) < 1e-9);
    }
}

#[test]
fn zero_duration_gives_only_the_initial_snapshot() {
    let net = branched_network();
    let config = SimConfig {
        duration_s: 0.0,
        record: vec![4],
        ..SimConfig::default()
    };
    let out = dersim::run(&net, &ElasticModel::default(), &config).unwrap();
    assert_eq!(out.series.len(), 1);
    assert_eq!(out.series.times, vec![0.0]);
}

#[test]
fn longer_runs_extend_shorter_ones() {
    let net = branched_network();
    let model = ElasticModel::default();
    let short = SimConfig {
        duration_s: 0.1,
        record: vec![4, 6],
        actuation: Some(Actuation::new(2, Vec3::y(), 0.003, 5.0)),
        ..SimConfig::default()
    };
    let long = SimConfig {
        duration_s: 0.2,
        ..short.clone()
    };
    let a = dersim::run(&net, &model, &short).unwrap().series;
    let b = dersim::run(&net, &model, &long).unwrap().series;
    assert_eq!(b.len(), 2 * a.len() - 1);
    assert_eq!(a.positions[..], b.positions[..a.len()]);
    assert_eq!(a.times[..], b.times[..a.len()]);
}

#[test]
fn damped_dynamics_settle_onto_the_static_sag() {
    let net = RodNetwork::cantilever(0.15, 12, 0.003, Vec3::x(), MaterialParams::default()).unwrap();
    let model = ElasticModel::default();
    let config = SimConfig {
        damping: Some(60.0),
        presettle: false,
        ..SimConfig::default()
    };
    let statics = dersim::static_solve(&net, &model, &config, None).unwrap();
    let mut sim = Simulator::new(&net, &model, &config).unwrap();
    for _ in 0..3000 {
        sim.step().unwrap();
    }
    let err = (&sim.state.q - &statics.q).amax();
    assert!(err < 1e-6, "{err}");
    assert!((statics.q - DVector::from_vec(net.rest_positions())).amax() > 1e-5);
}

#[test]
fn static_tip_deflection_matches_beam_theory() {
    let setup = CantileverSetup::default();
    let force = 0.02;
    let beam = bench::cantilever_static_deflection(setup.young_pa, setup.radius_m, setup.length_m, force).unwrap();
    assert!(beam.delta_m / setup.length_m < 0.05);
    let der = setup.der_tip_deflection(force).unwrap();
    let rel = (der - beam.delta_m).abs() / beam.delta_m;
    assert!(rel < 0.02, "der {der} beam {} rel {rel}", beam.delta_m);
}

#[test]
fn ringdown_frequency_matches_beam_theory() {
    let setup = CantileverSetup::default();
    let f_beam = bench::cantilever_frequency(setup.young_pa, setup.density_kgm3, setup.radius_m, setup.length_m).unwrap();
    let f_der = setup.der_ringdown_frequency(0.02, 5e-4, 2.0).unwrap();
    let rel = (f_der - f_beam).abs() / f_beam;
    assert!(rel < 0.03, "der {f_der} beam {f_beam} rel {rel}");
    let e = bench::estimate_young_modulus(f_der, setup.density_kgm3, setup.radius_m, setup.length_m).unwrap();
    assert!((e - setup.young_pa).abs() / setup.young_pa < 0.05);
}
