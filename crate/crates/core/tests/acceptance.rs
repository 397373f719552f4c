//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.
//!
//! Criterion 7 trains fifteen agents for a million control steps each and
//! takes over an hour on one core. Set `SDE_SKIP_LONG=1` to skip it.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sde_core::biomech::dynamics::step_in_place;
use sde_core::biomech::env::observation_mirror_permutation;
use sde_core::biomech::{TerrainKind, TerrainProfile, WalkerEnv, WalkerModel};
use sde_core::coopt::{
    build_batches, compute_gae, loss_and_grad, Mode, PolicyNetwork, PpoBatch, PpoParams, Stage,
    TrainConfig, Trainer,
};
use sde_core::harness::persist::{
    basis_from_str, basis_to_string, checkpoint_from_str, checkpoint_to_string,
};
use sde_core::harness::{
    compare_runs, load_basis, load_checkpoint, run_experiment, save_basis, save_checkpoint,
    save_history, Checkpoint, ExperimentConfig,
};
use sde_core::muscle::{muscle_force, passive_force, MuscleParams, MuscleState, DEFAULT_L_MAX};
use sde_core::spectral::{
    build_basis, collect_grouped, decode_morphology, eigendecompose_symmetric,
    expand_block_diagonal, project, Block, LatentCode, LengthHistory, Matrix, MorphologyVector,
    Symmetry,
};
use sde_core::SdeError;

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The excitation history the shipped experiment configs expect, collected
/// once per symmetry before any criterion is timed.
fn walk_history(symmetry: Symmetry) -> &'static LengthHistory {
    static BILATERAL: OnceLock<LengthHistory> = OnceLock::new();
    static PER_MUSCLE: OnceLock<LengthHistory> = OnceLock::new();
    let cell = match symmetry {
        Symmetry::Bilateral => &BILATERAL,
        Symmetry::PerMuscle => &PER_MUSCLE,
    };
    cell.get_or_init(|| {
        let model = WalkerModel::default_biped();
        collect_grouped(
            &model,
            &TerrainProfile::new(TerrainKind::Walk, 0),
            20_000,
            0,
            symmetry,
        )
        .unwrap()
    })
}

// ---------------------------------------------------------------- 1

fn muscle_curves() -> Check {
    let kappas: Vec<f64> = (0..20).map(|i| 0.5 + 1.5 * i as f64 / 19.0).collect();
    for &k in &kappas {
        let at_rest = passive_force(1.0, k, DEFAULT_L_MAX).unwrap();
        let at_max = passive_force(DEFAULT_L_MAX, k, DEFAULT_L_MAX).unwrap();
        ensure!(at_rest.abs() <= 1e-12, "F_P(1) = {at_rest} at kappa {k}");
        ensure!(
            (at_max - 1.0).abs() <= 1e-12,
            "F_P(l_max) = {at_max} at kappa {k}"
        );
    }
    let lengths: Vec<f64> = (0..50)
        .map(|i| 0.6 + (DEFAULT_L_MAX - 0.6) * i as f64 / 49.0)
        .collect();
    let grid: Vec<Vec<f64>> = kappas
        .iter()
        .map(|&k| {
            lengths
                .iter()
                .map(|&l| passive_force(l, k, DEFAULT_L_MAX).unwrap())
                .collect()
        })
        .collect();
    for (ki, row) in grid.iter().enumerate() {
        for li in 1..row.len() {
            ensure!(
                row[li] >= row[li - 1],
                "F_P decreases in L at kappa {}, L {}",
                kappas[ki],
                lengths[li]
            );
        }
    }
    for ki in 1..grid.len() {
        for li in 0..lengths.len() {
            ensure!(
                grid[ki][li] <= grid[ki - 1][li],
                "F_P increases with kappa at L {} ({} -> {})",
                lengths[li],
                kappas[ki - 1],
                kappas[ki]
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let state = MuscleState {
            length: rng.gen_range(0.6..1.6),
            velocity: rng.gen_range(-15.0..15.0),
            activation: rng.gen(),
        };
        let mut p = MuscleParams::with_reference(rng.gen_range(100.0..3000.0), 10.0);
        p.nu = rng.gen_range(0.5..1.5);
        p.kappa = rng.gen_range(0.5..2.0);
        let unit = muscle_force(&state, &p).unwrap();
        for sigma in [0.5, 0.75, 1.25, 1.5] {
            p.sigma = sigma;
            let f = muscle_force(&state, &p).unwrap();
            let err = (f - sigma * unit).abs() / unit.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    ensure!(
        worst <= 1e-12,
        "muscle force deviates from linearity in sigma by {worst:e}"
    );
    Ok(format!(
        "20 kappa endpoints, 50x20 grid, sigma linearity {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 2

fn decode_suite() -> Check {
    let h = walk_history(Symmetry::Bilateral);
    let basis = build_basis(h, 5).unwrap();
    let m = basis.m();
    let v = expand_block_diagonal(&basis);
    let mean = basis.mean_theta.as_slice().to_vec();

    let zero = decode_morphology(&LatentCode::zeros(5), &basis).unwrap();
    ensure!(
        zero == basis.mean_theta,
        "z = 0 does not decode to the reference design"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let mut z = vec![0.0; 15];
        for zi in &mut z[..5] {
            *zi = rng.gen_range(-2.0..2.0);
        }
        let theta = decode_morphology(&LatentCode::new(z).unwrap(), &basis).unwrap();
        for b in [Block::Nu, Block::Kappa] {
            ensure!(
                theta.block(b) == basis.mean_theta.block(b),
                "sigma-only latent moved the {b:?} block"
            );
        }
    }

    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let z: Vec<f64> = (0..15).map(|_| rng.gen_range(-0.1..0.1)).collect();
        // Independent linear map; skip draws that would be clamped.
        let raw: Vec<f64> = v
            .matvec(&z)
            .unwrap()
            .iter()
            .zip(&mean)
            .map(|(d, mu)| mu + d)
            .collect();
        if !MorphologyVector::new(raw.clone()).unwrap().within_bounds() {
            continue;
        }
        tested += 1;
        let theta = decode_morphology(&LatentCode::new(z.clone()).unwrap(), &basis).unwrap();
        for (a, b) in theta.as_slice().iter().zip(&raw) {
            worst = worst.max((a - b).abs());
        }
        let back = project(&theta, &basis).unwrap();
        for (a, b) in back.as_slice().iter().zip(&z) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst <= 1e-8, "round trip error {worst:e}");

    for i in 0..1000 {
        let scale = if i % 2 == 0 { 2.0 } else { 50.0 };
        let z: Vec<f64> = (0..15).map(|_| rng.gen_range(-scale..scale)).collect();
        let theta = decode_morphology(&LatentCode::new(z).unwrap(), &basis).unwrap();
        ensure!(theta.within_bounds(), "decoded design outside bounds");
        ensure!(theta.m() == m, "decoded design has {} groups", theta.m());
    }
    Ok(format!(
        "round trip {worst:.1e} over 100 codes, 1000 codes in bounds"
    ))
}

// ---------------------------------------------------------------- 3

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-3.0..3.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[p][col] == 0.0 {
            return 0.0;
        }
        if p != col {
            a.swap(p, col);
            d = -d;
        }
        d *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    d
}

/// Real roots of `det(λI - C)`, located by a fine sign scan over the
/// Gershgorin interval and refined by bisection. Ascending.
fn characteristic_roots(c: &Matrix) -> Vec<f64> {
    let n = c.rows();
    let radius = (0..n)
        .map(|i| (0..n).map(|j| c[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let p = |lambda: f64| {
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            lambda - c[(i, j)]
                        } else {
                            -c[(i, j)]
                        }
                    })
                    .collect()
            })
            .collect();
        det(rows)
    };
    let steps = 200_000;
    let h = 2.0 * radius / steps as f64;
    let mut roots = Vec::new();
    let mut x0 = -radius;
    let mut p0 = p(x0);
    for s in 1..=steps {
        let x1 = -radius + s as f64 * h;
        let p1 = p(x1);
        if p0 == 0.0 {
            roots.push(x0);
        } else if p0.signum() != p1.signum() && p1 != 0.0 {
            let (mut lo, mut hi, mut plo) = (x0, x1, p0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let pm = p(mid);
                if pm.signum() == plo.signum() {
                    lo = mid;
                    plo = pm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        p0 = p1;
    }
    roots
}

fn pca_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_orth: f64 = 0.0;
    let mut worst_rec: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    for trial in 0..50 {
        let n = 1 + trial % 16;
        let c = random_symmetric(n, &mut rng);
        let e = eigendecompose_symmetric(&c).unwrap();
        let v = &e.vectors;
        worst_orth = worst_orth.max(
            v.transpose()
                .matmul(v)
                .unwrap()
                .max_abs_diff(&Matrix::identity(n)),
        );
        let rec = v
            .matmul(&Matrix::diag(&e.values))
            .unwrap()
            .matmul(&v.transpose())
            .unwrap();
        worst_rec = worst_rec.max(rec.max_abs_diff(&c));
        if n <= 4 {
            let mut oracle = characteristic_roots(&c);
            ensure!(
                oracle.len() == n,
                "oracle found {} roots for M = {n}",
                oracle.len()
            );
            oracle.reverse();
            for (a, b) in e.values.iter().zip(&oracle) {
                worst_eig = worst_eig.max((a - b).abs());
            }
        }
    }
    ensure!(
        worst_orth <= 1e-8,
        "V^T V deviates from I by {worst_orth:e}"
    );
    ensure!(worst_rec < 1e-7, "reconstruction error {worst_rec:e}");
    ensure!(
        worst_eig <= 1e-6,
        "eigenvalues deviate from the characteristic roots by {worst_eig:e}"
    );

    for symmetry in [Symmetry::Bilateral, Symmetry::PerMuscle] {
        let h = walk_history(symmetry);
        let b = build_basis(h, 5).unwrap();
        let kt = b.vectors.transpose().matmul(&b.vectors).unwrap();
        ensure!(
            kt.max_abs_diff(&Matrix::identity(5)) <= 1e-8,
            "retained V_k not orthonormal"
        );
        let cum = b.cumulative_explained_variance();
        ensure!(
            cum.windows(2).all(|w| w[1] >= w[0]),
            "cumulative explained variance not monotone"
        );
        let total: f64 = b.eigenvalues.iter().sum();
        let direct = b.eigenvalues.iter().sum::<f64>() / total;
        ensure!(
            (cum[cum.len() - 1] - 1.0).abs() <= 1e-10,
            "cumulative at k = M is {}",
            cum[cum.len() - 1]
        );
        ensure!(
            (direct - 1.0).abs() <= 1e-10,
            "eigenvalue share at k = M is {direct}"
        );
    }
    Ok(format!(
        "orthogonality {worst_orth:.1e}, reconstruction {worst_rec:.1e}, oracle eigenvalues {worst_eig:.1e}"
    ))
}

// ---------------------------------------------------------------- 4

fn gradient_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (obs_dim, act_dim) = (5, 3);
    let mut net = PolicyNetwork::new(obs_dim, act_dim, &[7, 6], -0.3, &mut rng);
    for p in &mut net.params {
        *p += rng.gen_range(-0.3..0.3);
    }
    let params = PpoParams::default();
    let mut batch = PpoBatch::new(obs_dim, act_dim);
    let mut cache = Default::default();
    // Log-ratio offsets place two samples inside the clip range, one in the
    // flat clipped region and one clipped with the ratio still active.
    let offsets = [0.05, -0.08, 0.6, -0.6];
    let advantages = [1.3, -0.7, 0.9, 1.1];
    for i in 0..4 {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = net.forward_cached(&obs, &mut cache);
        let raw: Vec<f64> = out
            .mean
            .iter()
            .map(|m| m + rng.gen_range(-1.0..1.0))
            .collect();
        let logp = gaussian_log_density(&raw, &out.mean, &out.log_std);
        batch.push(
            &obs,
            &raw,
            logp - offsets[i],
            advantages[i],
            rng.gen_range(-2.0..2.0),
        );
    }
    let idx = [0, 1, 2, 3];
    let (_, grad) = loss_and_grad(&net, &batch, &idx, &params);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..net.params.len() {
        let mut hi = net.clone();
        hi.params[j] += eps;
        let mut lo = net.clone();
        lo.params[j] -= eps;
        let fd = (loss_and_grad(&hi, &batch, &idx, &params).0.total
            - loss_and_grad(&lo, &batch, &idx, &params).0.total)
            / (2.0 * eps);
        let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    ensure!(worst < 1e-4, "gradient relative error {worst:e}");

    let mut gae_worst: f64 = 0.0;
    let mut trajectories = 0;
    let grid = [0.0, 0.5, 0.9, 1.0];
    for t in 1..=8usize {
        for mask in 0..(1u32 << t) {
            let dones: Vec<bool> = (0..t).map(|i| mask >> i & 1 == 1).collect();
            let rewards: Vec<f64> = (0..t).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..=t).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for &gamma in &grid {
                for &lambda in &grid {
                    trajectories += 1;
                    let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, lambda);
                    for s in 0..t {
                        let oracle =
                            brute_force_advantage(&rewards, &values, &dones, gamma, lambda, s);
                        gae_worst = gae_worst.max((adv[s] - oracle).abs());
                        gae_worst = gae_worst.max((ret[s] - (oracle + values[s])).abs());
                    }
                }
            }
        }
    }
    ensure!(
        gae_worst <= 1e-10,
        "GAE deviates from the brute-force sum by {gae_worst:e}"
    );
    Ok(format!(
        "{} parameters, max relative error {worst:.1e}; GAE {gae_worst:.1e} over {trajectories} trajectories",
        net.params.len()
    ))
}

fn gaussian_log_density(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

/// `sum_l (γλ)^l δ_{s+l}`, stopping after the first terminal step.
fn brute_force_advantage(
    r: &[f64],
    v: &[f64],
    done: &[bool],
    gamma: f64,
    lambda: f64,
    s: usize,
) -> f64 {
    let mut total = 0.0;
    for (l, t) in (s..r.len()).enumerate() {
        let next = if done[t] { 0.0 } else { v[t + 1] };
        let delta = r[t] + gamma * next - v[t];
        total += (gamma * lambda).powi(l as i32) * delta;
        if done[t] {
            break;
        }
    }
    total
}

// ---------------------------------------------------------------- 5

fn simulator_suite() -> Check {
    let h = walk_history(Symmetry::Bilateral);
    let basis = build_basis(h, 5).unwrap();
    let z: Vec<f64> = (0..15).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
    let theta = decode_morphology(&LatentCode::new(z).unwrap(), &basis).unwrap();

    let rollout = || {
        let mut env = WalkerEnv::new(
            WalkerModel::default_biped(),
            TerrainProfile::new(TerrainKind::Rough, 5),
            Symmetry::Bilateral,
        )
        .unwrap();
        env.reset(31);
        env.set_morphology(theta.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut trace = Vec::new();
        for _ in 0..300 {
            let u: Vec<f64> = (0..env.num_muscles()).map(|_| rng.gen()).collect();
            let out = env.step(&u).unwrap();
            trace.push((env.state().clone(), out.reward.to_bits(), env.observe()));
            if out.done {
                break;
            }
        }
        trace
    };
    let a = rollout();
    ensure!(
        a == rollout(),
        "identical inputs produced different trajectories"
    );

    // Mirror: symmetric design, flat ground, mirrored start and excitations.
    let mut env = WalkerEnv::new(
        WalkerModel::default_biped(),
        TerrainProfile::flat(),
        Symmetry::Bilateral,
    )
    .unwrap();
    env.reset(7);
    env.set_morphology(theta.clone()).unwrap();
    // Falls would end the comparison early; the dynamics stay well defined
    // with the walker on the ground.
    let mut model = env.model().clone();
    model.fall_height_fraction = f64::NEG_INFINITY;
    model.fall_pitch = f64::INFINITY;
    let terrain = env.terrain().clone();
    let perm = model.mirror_permutation();
    let obs_perm = observation_mirror_permutation(&model, theta.m());
    let mut s = env.state().clone();
    s.q[3..9].copy_from_slice(&[0.25, 0.4, -0.1, -0.15, 0.1, 0.05]);
    let mut sm = s.mirrored(&perm);
    let mut mirror_env = env.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for _ in 0..200 {
        let u: Vec<f64> = (0..model.num_muscles()).map(|_| rng.gen()).collect();
        let um: Vec<f64> = perm.iter().map(|&j| u[j]).collect();
        for _ in 0..model.control_substeps {
            step_in_place(&mut s, &u, &model, &terrain, model.dt).unwrap();
            step_in_place(&mut sm, &um, &model, &terrain, model.dt).unwrap();
            let expected = s.mirrored(&perm);
            for (x, y) in expected
                .q
                .iter()
                .chain(&expected.qdot)
                .chain(&expected.activations)
                .zip(sm.q.iter().chain(&sm.qdot).chain(&sm.activations))
            {
                worst = worst.max((x - y).abs());
            }
            ensure!(
                s.done == sm.done,
                "only one of the mirrored walkers terminated"
            );
            if s.done {
                break;
            }
        }
        env.set_state(s.clone());
        mirror_env.set_state(sm.clone());
        let (o, om) = (env.observe(), mirror_env.observe());
        for (i, &j) in obs_perm.iter().enumerate() {
            worst = worst.max((o[j] - om[i]).abs());
        }
        if s.done {
            break;
        }
        steps += 1;
    }
    ensure!(worst <= 1e-9, "mirrored trajectories diverge by {worst:e}");
    ensure!(
        steps == 200,
        "walker terminated after {steps} mirrored control steps"
    );
    Ok(format!(
        "{} bit-identical steps; mirror error {worst:.1e} over {steps} control steps",
        a.len()
    ))
}

// ---------------------------------------------------------------- 6

fn two_stage_suite() -> Check {
    let h = walk_history(Symmetry::Bilateral);
    let basis = build_basis(h, 5).unwrap();
    let config = TrainConfig {
        mode: Mode::SdeSigma,
        k: 5,
        step_budget: 50_000,
        control_hidden: vec![32, 32],
        design_hidden: vec![16, 16],
        ppo: PpoParams {
            rollout_steps: 1500,
            minibatch: 128,
            epochs: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut trainer =
        Trainer::new(config, WalkerModel::default_biped(), Some(basis.clone())).unwrap();
    let reference = basis.mean_theta.clone();
    let mut episodes = 0;
    let mut updates = 0;
    while episodes < 100 {
        let report = trainer.step().unwrap();
        updates += 1;
        let design_dim = trainer.agent().design.as_ref().map_or(0, |d| d.act_dim());
        let (_, design_batch) = build_batches(&report.episodes, 0.99, 0.95, design_dim);
        let live = report
            .episodes
            .iter()
            .filter(|e| !e.fault && !e.is_empty())
            .count();
        ensure!(
            design_batch.len() == live,
            "design batch has {} records for {live} episodes",
            design_batch.len()
        );
        for ep in &report.episodes {
            episodes += 1;
            let records = ep.records();
            let designs: Vec<_> = records
                .iter()
                .filter(|r| r.stage == Stage::Design)
                .collect();
            ensure!(
                designs.len() == 1,
                "episode with {} design records",
                designs.len()
            );
            ensure!(
                records[0].stage == Stage::Design && records[0].t == 0,
                "design record is not first"
            );
            ensure!(
                ep.morphology_hashes.windows(2).all(|w| w[0] == w[1]),
                "morphology changed within an episode"
            );
            for b in [Block::Nu, Block::Kappa] {
                ensure!(
                    ep.theta.block(b) == reference.block(b),
                    "SDE-sigma moved the {b:?} block"
                );
            }
            let z = &ep.design.as_ref().unwrap().latent;
            ensure!(
                z[5..].iter().all(|v| *v == 0.0),
                "SDE-sigma emitted non-zero nu/kappa latents"
            );
        }
    }
    Ok(format!("{episodes} episodes over {updates} updates"))
}

// ---------------------------------------------------------------- 7

fn efficiency_claim() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let history = tmp.path().join("history-walk.csv");
    save_history(walk_history(Symmetry::Bilateral), &history).unwrap();
    let mut dirs = Vec::new();
    for name in [
        "sde-walk",
        "fixed-walk",
        "direct-walk",
        "sde-rough",
        "fixed-rough",
    ] {
        let path = repo_root()
            .join("configs/experiments")
            .join(format!("{name}.json"));
        let mut config = ExperimentConfig::load(&path).map_err(|e| e.to_string())?;
        config.output_dir = tmp.path().to_path_buf();
        if config.history.is_some() {
            config.history = Some(history.clone());
        }
        ensure!(
            config.step_budget >= 1_000_000 && config.seeds.len() >= 3,
            "{name} is below the required scale"
        );
        let started = Instant::now();
        for outcome in run_experiment(&config, |_, _| {}).map_err(|e| e.to_string())? {
            println!(
                "    {} final eval {:.2} ({:.0} s)",
                outcome.run_id,
                outcome
                    .final_eval
                    .as_ref()
                    .and_then(|e| e.mean_return())
                    .unwrap_or(f64::NAN),
                started.elapsed().as_secs_f64()
            );
            dirs.push(outcome.dir);
        }
    }
    let cmp = compare_runs(&dirs).map_err(|e| e.to_string())?;
    for line in cmp.to_table().lines() {
        println!("    {line}");
    }
    let row = |label: &str, terrain: &str| {
        cmp.rows
            .iter()
            .find(|r| r.label == label && r.terrain == terrain)
            .ok_or_else(|| format!("no {label} runs on {terrain}"))
    };
    let auc = |label, terrain| row(label, terrain).map(|r| r.auc.mean.unwrap_or(f64::NAN));
    let eval = |label, terrain| row(label, terrain).map(|r| r.final_eval.mean.unwrap_or(f64::NAN));
    let (sde, fixed, direct) = (
        auc("SDE-k5", "walk")?,
        auc("Fixed", "walk")?,
        auc("Direct", "walk")?,
    );
    let (sde_rough, fixed_rough) = (eval("SDE-k5", "rough")?, eval("Fixed", "rough")?);
    let summary = format!(
        "walk AUC SDE {sde:.4e} Fixed {fixed:.4e} Direct {direct:.4e}; rough final eval SDE {sde_rough:.2} Fixed {fixed_rough:.2}"
    );
    ensure!(sde >= fixed, "{summary}: SDE AUC below Fixed");
    ensure!(sde >= direct, "{summary}: SDE AUC below Direct");
    ensure!(
        sde_rough >= fixed_rough,
        "{summary}: SDE final eval below Fixed on rough"
    );
    Ok(summary)
}

// ---------------------------------------------------------------- 8

fn scree() -> Check {
    let mut parts = Vec::new();
    for symmetry in [Symmetry::Bilateral, Symmetry::PerMuscle] {
        let h = walk_history(symmetry);
        let b = build_basis(h, h.m()).unwrap();
        let cum = b.cumulative_explained_variance();
        let m = cum.len();
        ensure!(
            cum[4] > cum[2],
            "{symmetry:?}: k=5 share {} does not exceed k=3 share {}",
            cum[4],
            cum[2]
        );
        ensure!(
            (cum[m - 1] - 1.0).abs() <= 1e-10,
            "{symmetry:?}: k=M share {}",
            cum[m - 1]
        );
        parts.push(format!(
            "{symmetry:?} M={m} k3 {:.4} k5 {:.4}",
            cum[2], cum[4]
        ));
    }
    Ok(format!(
        "{} (reference 0.9013 / 0.9838, not asserted)",
        parts.join(", ")
    ))
}

// ---------------------------------------------------------------- 9

fn persistence() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let h = walk_history(Symmetry::Bilateral);
    let basis = build_basis(h, 5).unwrap();
    let path = tmp.path().join("basis.txt");
    save_basis(&basis, &path).unwrap();
    ensure!(
        load_basis(&path).unwrap() == basis,
        "basis file round trip differs"
    );

    let config = TrainConfig {
        mode: Mode::Sde,
        step_budget: 600,
        control_hidden: vec![8],
        design_hidden: vec![8],
        ppo: PpoParams {
            rollout_steps: 300,
            minibatch: 64,
            epochs: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut trainer =
        Trainer::new(config, WalkerModel::default_biped(), Some(basis.clone())).unwrap();
    trainer.step().unwrap();
    let cp = Checkpoint {
        terrain: TerrainKind::Walk,
        terrain_seed: 0,
        seed: 0,
        iteration: trainer.iteration(),
        env_steps: trainer.env_steps(),
        model: WalkerModel::default_biped(),
        agent: trainer.agent().clone(),
    };
    let cp_path = tmp.path().join("checkpoint.txt");
    save_checkpoint(&cp, &cp_path).unwrap();
    ensure!(
        load_checkpoint(&cp_path).unwrap() == cp,
        "checkpoint file round trip differs"
    );

    let mut configs = 0;
    for entry in std::fs::read_dir(repo_root().join("configs/experiments")).unwrap() {
        let c = ExperimentConfig::load(&entry.unwrap().path()).map_err(|e| e.to_string())?;
        ensure!(
            ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap() == c,
            "config {} round trip",
            c.name
        );
        configs += 1;
    }

    // Corruption: every truncation and a damaged value in each file type.
    let basis_text = basis_to_string(&basis);
    let cp_text = checkpoint_to_string(&cp).unwrap();
    let structured = |e: &SdeError| matches!(e, SdeError::Parse { .. } | SdeError::Domain(_));
    let mut rejected = 0;
    for (text, kind) in [(&basis_text, "basis"), (&cp_text, "checkpoint")] {
        let lines: Vec<&str> = text.lines().collect();
        for n in 0..lines.len() {
            let cut = lines[..n].join("\n");
            let err = if kind == "basis" {
                basis_from_str(&cut, "cut").err()
            } else {
                checkpoint_from_str(&cut, "cut").err()
            };
            ensure!(
                err.as_ref().is_some_and(structured),
                "{kind} truncated to {n} lines was accepted"
            );
            rejected += 1;
        }
        for target in 0..lines.len() {
            if !lines[target].contains(|c: char| c.is_ascii_digit()) {
                continue;
            }
            let mut damaged: Vec<&str> = lines.clone();
            let line = lines[target].replacen(|c: char| c.is_ascii_digit(), "#", 1);
            damaged[target] = &line;
            let damaged = damaged.join("\n") + "\n";
            let err = if kind == "basis" {
                basis_from_str(&damaged, "bad").err()
            } else {
                checkpoint_from_str(&damaged, "bad").err()
            };
            ensure!(
                err.as_ref().is_some_and(structured),
                "{kind} with line {} damaged was accepted",
                target + 1
            );
            rejected += 1;
        }
    }
    let cfg_text = ExperimentConfig::default().to_json().unwrap();
    ensure!(
        ExperimentConfig::from_json(&cfg_text[..cfg_text.len() / 2]).is_err(),
        "truncated config accepted"
    );
    let extra = cfg_text.replacen('{', "{\n  \"unknown_key\": 1,", 1);
    ensure!(
        ExperimentConfig::from_json(&extra).is_err(),
        "config with an unknown key accepted"
    );
    let bad_path = tmp.path().join("bad.json");
    std::fs::write(&bad_path, &cfg_text[..cfg_text.len() / 2]).unwrap();
    ensure!(
        matches!(
            ExperimentConfig::load(&bad_path),
            Err(SdeError::Parse { .. })
        ),
        "truncated config file is not a parse error"
    );
    Ok(format!(
        "basis, checkpoint, {configs} configs; {rejected} truncated or damaged files rejected"
    ))
}

// ----------------------------------------------------------------

fn main() {
    let skip_long = std::env::var("SDE_SKIP_LONG").is_ok_and(|v| v == "1");
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        ("muscle curves", Duration::from_secs(1), muscle_curves),
        ("decode", Duration::from_secs(1), decode_suite),
        ("PCA", Duration::from_secs(10), pca_suite),
        ("gradients", Duration::from_secs(30), gradient_suite),
        (
            "simulator determinism and symmetry",
            Duration::from_secs(30),
            simulator_suite,
        ),
        (
            "two-stage structure",
            Duration::from_secs(120),
            two_stage_suite,
        ),
        (
            "efficiency (walk AUC, rough final eval)",
            Duration::from_secs(3 * 3600),
            efficiency_claim,
        ),
        ("scree", Duration::from_secs(60), scree),
        ("persistence", Duration::from_secs(5), persistence),
    ];
    let setup = Instant::now();
    walk_history(Symmetry::Bilateral);
    walk_history(Symmetry::PerMuscle);
    println!(
        "setup: excitation histories collected in {:.2?}",
        setup.elapsed()
    );
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if n == 7 && skip_long {
            println!("criterion {n} [{name}]: SKIPPED (SDE_SKIP_LONG=1)");
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {n} [{name}]: PASS ({detail}; {elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} [{name}]: FAIL ({detail}; {elapsed:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
