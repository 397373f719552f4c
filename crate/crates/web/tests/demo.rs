use sde_core::biomech::{TerrainKind, WalkerModel};
use sde_core::coopt::{Mode, PpoParams, TrainConfig, Trainer};
use sde_core::harness::persist::checkpoint_to_string;
use sde_core::harness::Checkpoint;
use sde_web::{length_curves, velocity_curve, Manifold, WalkerDemo};

#[test]
fn curves_have_the_expected_anchors() {
    let c = length_curves(1.3, 61).unwrap();
    assert_eq!(c.len(), 3 * 61);
    let last = &c[c.len() - 3..];
    assert!((last[0] - 1.6).abs() < 1e-12);
    assert!((last[2] - 1.0).abs() < 1e-12);
    assert!(c.chunks(3).all(|p| p[1] >= 0.0 && p[1] <= 1.0));
    assert!(length_curves(-1.0, 10).is_err());
    let v = velocity_curve(3);
    assert_eq!(v, vec![-1.0, 1.5, 0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn manifold_decodes_zero_to_the_default_triad() {
    let m = Manifold::build(800, 2, 3).unwrap();
    let theta = m.decode_latent(&[0.0; 9]).unwrap();
    assert_eq!(theta, m.basis().mean_theta.as_slice());
    assert!(m.decode_latent(&[0.0; 6]).is_err());
    let cum = m.basis().cumulative_explained_variance();
    assert!((cum.last().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn excitation_driven_walker_steps_and_reports_pose() {
    let mut d = WalkerDemo::build(TerrainKind::Rough, 5).unwrap();
    assert_eq!(d.pose_points().len(), 20);
    let mut steps = 0;
    loop {
        let u = d.random_excitations();
        if d.advance(&u).unwrap() {
            break;
        }
        steps += 1;
        assert!(d.pose_points().iter().all(|v| v.is_finite()));
    }
    assert!(steps > 0);
    // Once done, further steps are no-ops.
    assert!(d.advance(&[]).unwrap());
    d.restart(5).unwrap();
    assert!(!d.advance(&[0.2; 3]).unwrap());
}

#[test]
fn checkpoint_playback_matches_across_loads() {
    let config = TrainConfig {
        mode: Mode::Direct,
        control_hidden: vec![8],
        design_hidden: vec![8],
        ppo: PpoParams {
            rollout_steps: 200,
            ..Default::default()
        },
        ..Default::default()
    };
    let trainer = Trainer::new(config, WalkerModel::default_biped(), None).unwrap();
    let cp = Checkpoint {
        terrain: TerrainKind::Walk,
        terrain_seed: 0,
        seed: 0,
        iteration: 0,
        env_steps: 0,
        model: WalkerModel::default_biped(),
        agent: trainer.agent().clone(),
    };
    let text = checkpoint_to_string(&cp).unwrap();
    let run = |seed| {
        let mut d = WalkerDemo::build_from_checkpoint(&text, seed).unwrap();
        let mut poses = Vec::new();
        for _ in 0..50 {
            if d.advance(&[]).unwrap() {
                break;
            }
            poses.push(d.pose_points());
        }
        poses
    };
    assert_eq!(run(3), run(3));
    assert!(WalkerDemo::build_from_checkpoint("sde-checkpoint v1\nmode SDE\n", 0).is_err());
}
