//! Reduced-coordinate dynamics of the planar walker.
//!
//! Generalized coordinates are `[x, z, pitch, hip_l, knee_l, ankle_l, hip_r,
//! knee_r, ankle_r]`, where `(x, z)` is the hip position and `pitch` the
//! counter-clockwise torso angle from vertical. Segment angles are measured
//! counter-clockwise from straight down:
//!
//! ```text
//! thigh = pitch + hip
//! shank = thigh - knee
//! foot  = shank + pi/2 + ankle
//! ```
//!
//! Integration is semi-implicit Euler. Contact, joint-limit and passive
//! damping terms are treated linearly implicitly, and the muscle
//! force-velocity slope is linearized into the same solve, so the step stays
//! stable with stiff ground contact at a 2 ms step.
//!
//! The two legs never couple directly in the mass matrix, so the system is
//! solved through a Schur complement on the 3 base coordinates. Every
//! quantity that mixes both legs is formed as `left + right`, which makes a
//! mirrored state produce a bit-identical mirrored successor.

use std::f64::consts::FRAC_PI_2;

use crate::biomech::model::{JointKind, MuscleDescriptor, Side, WalkerModel};
use crate::biomech::terrain::TerrainProfile;
use crate::error::{Result, SdeError};
use crate::muscle::{self, activation_step};

pub const NQ: usize = 9;
pub const IX: usize = 0;
pub const IZ: usize = 1;
pub const IPITCH: usize = 2;

/// Muscle lengths are clamped below at this normalized value.
pub const MIN_MUSCLE_LENGTH: f64 = 0.3;

pub fn joint_index(side: Side, kind: JointKind) -> usize {
    3 + 3 * side.index() + kind.index()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub q: [f64; NQ],
    pub qdot: [f64; NQ],
    pub activations: Vec<f64>,
    /// Physics steps taken since reset.
    pub t: usize,
    pub done: bool,
    /// Terminated by a fall.
    pub fell: bool,
    /// Terminated by a non-finite state.
    pub fault: bool,
}

impl SimState {
    pub fn x(&self) -> f64 {
        self.q[IX]
    }

    pub fn z(&self) -> f64 {
        self.q[IZ]
    }

    pub fn pitch(&self) -> f64 {
        self.q[IPITCH]
    }

    pub fn leg_angles(&self, side: Side) -> [f64; 3] {
        let o = 3 + 3 * side.index();
        [self.q[o], self.q[o + 1], self.q[o + 2]]
    }

    pub fn leg_rates(&self, side: Side) -> [f64; 3] {
        let o = 3 + 3 * side.index();
        [self.qdot[o], self.qdot[o + 1], self.qdot[o + 2]]
    }

    /// Exchange the legs and permute activations with `muscle_perm`.
    pub fn mirrored(&self, muscle_perm: &[usize]) -> SimState {
        let mut out = self.clone();
        for k in 0..3 {
            out.q.swap(3 + k, 6 + k);
            out.qdot.swap(3 + k, 6 + k);
        }
        for (i, &j) in muscle_perm.iter().enumerate() {
            out.activations[i] = self.activations[j];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
            && self.activations.iter().all(|a| a.is_finite())
    }
}

/// Normalized length of a muscle for the joint angles of its own leg
/// (`[hip, knee, ankle]`), clamped below at [`MIN_MUSCLE_LENGTH`].
pub fn muscle_length(angles: &[f64; 3], d: &MuscleDescriptor) -> f64 {
    let excursion: f64 = d
        .moment_arms
        .iter()
        .map(|a| a.excursion(angles[a.joint.index()]))
        .sum();
    ((d.rest_length_geom - excursion) / d.rest_length_geom).max(MIN_MUSCLE_LENGTH)
}

/// Shortening velocity in rest lengths per second.
pub fn muscle_velocity(angles: &[f64; 3], rates: &[f64; 3], d: &MuscleDescriptor) -> f64 {
    let v: f64 = d
        .moment_arms
        .iter()
        .map(|a| a.arm(angles[a.joint.index()]) * rates[a.joint.index()])
        .sum();
    v / d.rest_length_geom
}

/// Joint angles of one leg clamped into the joint limits, as used by the
/// muscle path geometry.
pub fn clamped_leg_angles(state: &SimState, model: &WalkerModel, side: Side) -> [f64; 3] {
    let raw = state.leg_angles(side);
    let mut out = [0.0; 3];
    for k in JointKind::ALL {
        let j = model.joint(side, k);
        out[k.index()] = raw[k.index()].clamp(j.limit_low, j.limit_high);
    }
    out
}

/// Torques on the six actuated joints from muscle force magnitudes.
pub fn joint_torques(forces: &[f64], model: &WalkerModel, q: &[f64; NQ]) -> [f64; 6] {
    let mut tau = [0.0; 6];
    for (f, d) in forces.iter().zip(&model.muscles) {
        let o = 3 * d.side.index();
        for arm in &d.moment_arms {
            let j = o + arm.joint.index();
            tau[j] += arm.arm(q[3 + j]) * f;
        }
    }
    tau
}

type Mat3 = [[f64; 3]; 3];
type Mat6 = [[f64; 6]; 6];

/// Solve `a x = b` for symmetric positive-definite `a`.
fn chol_solve3(a: &Mat3, b: &[f64; 3]) -> Option<[f64; 3]> {
    let l00 = a[0][0].sqrt();
    let l10 = a[1][0] / l00;
    let l20 = a[2][0] / l00;
    let l11 = (a[1][1] - l10 * l10).sqrt();
    let l21 = (a[2][1] - l20 * l10) / l11;
    let l22 = (a[2][2] - l20 * l20 - l21 * l21).sqrt();
    if !(l00 > 0.0 && l11 > 0.0 && l22 > 0.0) {
        return None;
    }
    let y0 = b[0] / l00;
    let y1 = (b[1] - l10 * y0) / l11;
    let y2 = (b[2] - l20 * y0 - l21 * y1) / l22;
    let x2 = y2 / l22;
    let x1 = (y1 - l21 * x2) / l11;
    let x0 = (y0 - l10 * x1 - l20 * x2) / l00;
    Some([x0, x1, x2])
}

/// Coefficients of the three leg segment angles with respect to
/// `[pitch, hip, knee, ankle]`.
const ANGLE_COEF: [[f64; 4]; 3] = [
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 1.0, -1.0, 0.0],
    [1.0, 1.0, -1.0, 1.0],
];

#[inline]
fn dir(beta: f64) -> [f64; 2] {
    [beta.sin(), -beta.cos()]
}

#[inline]
fn dir_prime(beta: f64) -> [f64; 2] {
    [beta.cos(), beta.sin()]
}

struct LegFrame {
    hip: [f64; 2],
    d: [[f64; 2]; 3],
    dp: [[f64; 2]; 3],
    rate: [f64; 3],
}

/// Position, Jacobian over `[x, z, pitch, hip, knee, ankle]`, and the
/// velocity-product acceleration of a point on a leg.
struct PointKin {
    pos: [f64; 2],
    jac: [[f64; 6]; 2],
    bias: [f64; 2],
}

impl LegFrame {
    fn new(q: &[f64; NQ], qdot: &[f64; NQ], side: Side) -> Self {
        let o = 3 + 3 * side.index();
        let local = [q[IPITCH], q[o], q[o + 1], q[o + 2]];
        let local_rate = [qdot[IPITCH], qdot[o], qdot[o + 1], qdot[o + 2]];
        let mut beta = [0.0; 3];
        let mut rate = [0.0; 3];
        for i in 0..3 {
            for c in 0..4 {
                beta[i] += ANGLE_COEF[i][c] * local[c];
                rate[i] += ANGLE_COEF[i][c] * local_rate[c];
            }
        }
        beta[2] += FRAC_PI_2;
        Self {
            hip: [q[IX], q[IZ]],
            d: [dir(beta[0]), dir(beta[1]), dir(beta[2])],
            dp: [dir_prime(beta[0]), dir_prime(beta[1]), dir_prime(beta[2])],
            rate,
        }
    }

    /// Point at `hip + sum_i coef[i] * d(beta_i)`.
    fn point(&self, coef: [f64; 3]) -> PointKin {
        let mut pos = self.hip;
        let mut bias = [0.0; 2];
        let mut jac = [[0.0; 6]; 2];
        jac[0][0] = 1.0;
        jac[1][1] = 1.0;
        for i in 0..3 {
            if coef[i] == 0.0 {
                continue;
            }
            for a in 0..2 {
                pos[a] += coef[i] * self.d[i][a];
                bias[a] -= coef[i] * self.d[i][a] * self.rate[i] * self.rate[i];
                for c in 0..4 {
                    jac[a][2 + c] += coef[i] * self.dp[i][a] * ANGLE_COEF[i][c];
                }
            }
        }
        PointKin { pos, jac, bias }
    }
}

/// Coefficients locating each leg point along the thigh, shank and foot axes.
struct LegGeometry {
    com: [[f64; 3]; 3],
    heel: [f64; 3],
    toe: [f64; 3],
    knee: [f64; 3],
    ankle: [f64; 3],
}

impl LegGeometry {
    fn new(model: &WalkerModel, side: Side) -> Self {
        let [thigh, shank, foot] = model.leg_segments(side);
        Self {
            com: [
                [thigh.com, 0.0, 0.0],
                [thigh.length, shank.com, 0.0],
                [thigh.length, shank.length, foot.com],
            ],
            heel: [thigh.length, shank.length, -model.heel_offset],
            toe: [thigh.length, shank.length, foot.length - model.heel_offset],
            knee: [thigh.length, 0.0, 0.0],
            ankle: [thigh.length, shank.length, 0.0],
        }
    }
}

/// Per-leg contribution to the linear system over `[x, z, pitch, hip, knee,
/// ankle]`: left-hand matrix and right-hand side of the velocity update.
struct LegSystem {
    lhs: Mat6,
    rhs: [f64; 6],
}

fn local_rates(qdot: &[f64; NQ], side: Side) -> [f64; 6] {
    let o = 3 + 3 * side.index();
    [qdot[0], qdot[1], qdot[2], qdot[o], qdot[o + 1], qdot[o + 2]]
}

fn leg_system(
    state: &SimState,
    model: &WalkerModel,
    terrain: &TerrainProfile,
    side: Side,
    dt: f64,
) -> LegSystem {
    let frame = LegFrame::new(&state.q, &state.qdot, side);
    let geom = LegGeometry::new(model, side);
    let segs = model.leg_segments(side);
    let qd = local_rates(&state.qdot, side);
    let g = model.gravity;

    let mut mass: Mat6 = [[0.0; 6]; 6];
    let mut force = [0.0; 6];
    // Forces of the form -damp * qdot_next.
    let mut damp: Mat6 = [[0.0; 6]; 6];
    // Linearized muscle slope: force(qdot_next) ~ force(qdot) - lin (qdot_next - qdot).
    let mut lin = [[0.0; 3]; 3];

    for (i, seg) in segs.iter().enumerate() {
        let p = frame.point(geom.com[i]);
        let m = seg.mass;
        let ext = [-m * p.bias[0], -m * g - m * p.bias[1]];
        for r in 0..6 {
            force[r] += p.jac[0][r] * ext[0] + p.jac[1][r] * ext[1];
            for c in 0..6 {
                mass[r][c] += m * (p.jac[0][r] * p.jac[0][c] + p.jac[1][r] * p.jac[1][c]);
            }
        }
        let mut w = [0.0; 6];
        w[2..6].copy_from_slice(&ANGLE_COEF[i]);
        for r in 2..6 {
            for c in 2..6 {
                mass[r][c] += seg.inertia * w[r] * w[c];
            }
        }
    }

    // Muscles of this leg.
    let angles = clamped_leg_angles(state, model, side);
    let rates = state.leg_rates(side);
    for (idx, d) in model.muscles.iter().enumerate() {
        if d.side != side {
            continue;
        }
        let p = &d.params;
        let a = state.activations[idx];
        let length = muscle_length(&angles, d);
        let v = muscle_velocity(&angles, &rates, d);
        let vscale = p.nu * p.vmax_ref;
        let v_tilde = v / vscale;
        let f0 = p.sigma * p.f0_ref;
        let fl = muscle::active_force_length(length);
        let fv = muscle::force_velocity(v_tilde);
        let fp = (p.kappa * (length - 1.0)).exp_m1() / (p.kappa * (p.l_max - 1.0)).exp_m1();
        let fm = (fl * fv * a + fp.max(0.0)) * f0;
        let dfm_dv = fl * a * f0 * force_velocity_slope(v_tilde) / vscale;
        for arm_a in &d.moment_arms {
            let ja = arm_a.joint.index();
            let ra = arm_a.arm(angles[ja]);
            force[3 + ja] += ra * fm;
            for arm_b in &d.moment_arms {
                let jb = arm_b.joint.index();
                let rb = arm_b.arm(angles[jb]);
                lin[ja][jb] -= ra * rb * dfm_dv / d.rest_length_geom;
            }
        }
    }

    // Joint limits and passive joint damping.
    let raw = state.leg_angles(side);
    let k_lim = model.joint_limit_stiffness;
    let c_lim = model.joint_limit_damping;
    for kind in JointKind::ALL {
        let j = model.joint(side, kind);
        let r = 3 + kind.index();
        let q = raw[kind.index()];
        damp[r][r] += model.joint_damping;
        if q < j.limit_low {
            force[r] += k_lim * (j.limit_low - q);
            damp[r][r] += c_lim + dt * k_lim;
        } else if q > j.limit_high {
            force[r] -= k_lim * (q - j.limit_high);
            damp[r][r] += c_lim + dt * k_lim;
        }
    }

    // Ground contact at heel and toe.
    let cp = &model.contact;
    for coef in [geom.heel, geom.toe] {
        let p = frame.point(coef);
        let h = terrain.height(p.pos[0]);
        let n = terrain.normal(p.pos[0]);
        let pen = (h - p.pos[1]) * n[1];
        if pen <= 0.0 {
            continue;
        }
        let mut vel = [0.0; 2];
        for c in 0..6 {
            vel[0] += p.jac[0][c] * qd[c];
            vel[1] += p.jac[1][c] * qd[c];
        }
        let vn = n[0] * vel[0] + n[1] * vel[1];
        let f_est = cp.stiffness * pen - cp.damping * vn;
        if f_est <= 0.0 {
            continue;
        }
        let tangent = [n[1], -n[0]];
        let vt = tangent[0] * vel[0] + tangent[1] * vel[1];
        let ct = if cp.tangential_damping * vt.abs() <= cp.friction * f_est {
            cp.tangential_damping
        } else {
            cp.friction * f_est / vt.abs()
        };
        let mut jn = [0.0; 6];
        let mut jt = [0.0; 6];
        for c in 0..6 {
            jn[c] = p.jac[0][c] * n[0] + p.jac[1][c] * n[1];
            jt[c] = p.jac[0][c] * tangent[0] + p.jac[1][c] * tangent[1];
        }
        let cn = cp.damping + dt * cp.stiffness;
        for r in 0..6 {
            force[r] += jn[r] * cp.stiffness * pen;
            for c in 0..6 {
                damp[r][c] += cn * jn[r] * jn[c] + ct * jt[r] * jt[c];
            }
        }
    }

    let mut lhs = mass;
    let mut rhs = [0.0; 6];
    for r in 0..6 {
        let mut dq = 0.0;
        for c in 0..6 {
            lhs[r][c] += dt * damp[r][c];
            dq += damp[r][c] * qd[c];
        }
        rhs[r] = dt * (force[r] - dq);
    }
    for r in 0..3 {
        for c in 0..3 {
            lhs[3 + r][3 + c] += dt * lin[r][c];
        }
    }
    LegSystem { lhs, rhs }
}

/// Derivative of [`muscle::force_velocity`] with respect to `v_tilde`.
fn force_velocity_slope(v_tilde: f64) -> f64 {
    if v_tilde >= 1.0 {
        0.0
    } else if v_tilde >= 0.0 {
        let den = 1.0 + muscle::FV_CURVATURE * v_tilde;
        -(1.0 + muscle::FV_CURVATURE) / (den * den)
    } else if 1.0 - muscle::FV_ECCENTRIC_SLOPE * v_tilde < muscle::FV_ECCENTRIC_PLATEAU {
        -muscle::FV_ECCENTRIC_SLOPE
    } else {
        0.0
    }
}

fn torso_system(state: &SimState, model: &WalkerModel, dt: f64) -> (Mat3, [f64; 3]) {
    let t = model.torso();
    let (s, c) = state.q[IPITCH].sin_cos();
    let w = state.qdot[IPITCH];
    let jp = [-t.com * c, -t.com * s];
    let bias = [t.com * s * w * w, -t.com * c * w * w];
    let m = t.mass;
    let mass = [
        [m, 0.0, m * jp[0]],
        [0.0, m, m * jp[1]],
        [
            m * jp[0],
            m * jp[1],
            m * (jp[0] * jp[0] + jp[1] * jp[1]) + t.inertia,
        ],
    ];
    let ext = [-m * bias[0], -m * model.gravity - m * bias[1]];
    let rhs = [
        dt * ext[0],
        dt * ext[1],
        dt * (jp[0] * ext[0] + jp[1] * ext[1]),
    ];
    (mass, rhs)
}

/// Split a leg system into base block, coupling block, joint block solve.
struct Reduced {
    a: Mat3,
    b: Mat3,
    x: Mat3,
    y: [f64; 3],
    rb: [f64; 3],
}

fn reduce(sys: &LegSystem) -> Option<Reduced> {
    let mut a = [[0.0; 3]; 3];
    let mut b = [[0.0; 3]; 3];
    let mut d = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            a[r][c] = sys.lhs[r][c];
            b[r][c] = sys.lhs[r][3 + c];
            // Symmetrize the joint block; the linearized muscle term is
            // symmetric by construction up to rounding.
            d[r][c] = 0.5 * (sys.lhs[3 + r][3 + c] + sys.lhs[3 + c][3 + r]);
        }
    }
    let y = chol_solve3(&d, &[sys.rhs[3], sys.rhs[4], sys.rhs[5]])?;
    // x = D^-1 B^T, column by column.
    let mut x = [[0.0; 3]; 3];
    for c in 0..3 {
        let col = chol_solve3(&d, &[b[c][0], b[c][1], b[c][2]])?;
        for r in 0..3 {
            x[r][c] = col[r];
        }
    }
    Some(Reduced {
        a,
        b,
        x,
        y,
        rb: [sys.rhs[0], sys.rhs[1], sys.rhs[2]],
    })
}

fn mat_mul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

fn mat_vec3(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Advance `state` by one physics step in place.
pub fn step_in_place(
    state: &mut SimState,
    excitations: &[f64],
    model: &WalkerModel,
    terrain: &TerrainProfile,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(SdeError::domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if state.done {
        return Err(SdeError::domain("cannot step a terminated state"));
    }
    if excitations.len() != model.muscles.len() || state.activations.len() != model.muscles.len() {
        return Err(SdeError::domain(format!(
            "expected {} excitations, got {}",
            model.muscles.len(),
            excitations.len()
        )));
    }
    if excitations.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(SdeError::domain("excitations must lie in [0, 1]"));
    }

    for (a, &u) in state.activations.iter_mut().zip(excitations) {
        *a = activation_step(*a, u, dt);
    }

    let left = leg_system(state, model, terrain, Side::Left, dt);
    let right = leg_system(state, model, terrain, Side::Right, dt);
    let (torso_mass, torso_rhs) = torso_system(state, model, dt);

    let solved = (|| {
        let l = reduce(&left)?;
        let r = reduce(&right)?;
        let bxl = mat_mul3(&l.b, &l.x);
        let bxr = mat_mul3(&r.b, &r.x);
        let byl = mat_vec3(&l.b, &l.y);
        let byr = mat_vec3(&r.b, &r.y);
        let mut schur = [[0.0; 3]; 3];
        let mut rhs = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                schur[i][j] = torso_mass[i][j] + (l.a[i][j] + r.a[i][j]) - (bxl[i][j] + bxr[i][j]);
            }
            rhs[i] = torso_rhs[i] + (l.rb[i] + r.rb[i]) - (byl[i] + byr[i]);
        }
        for i in 0..3 {
            for j in 0..i {
                let avg = 0.5 * (schur[i][j] + schur[j][i]);
                schur[i][j] = avg;
                schur[j][i] = avg;
            }
        }
        let base = chol_solve3(&schur, &rhs)?;
        let xl = mat_vec3(&l.x, &base);
        let xr = mat_vec3(&r.x, &base);
        let mut delta = [0.0; NQ];
        delta[..3].copy_from_slice(&base);
        for k in 0..3 {
            delta[3 + k] = l.y[k] - xl[k];
            delta[6 + k] = r.y[k] - xr[k];
        }
        Some(delta)
    })();

    state.t += 1;
    let delta = match solved {
        Some(d) => d,
        None => {
            mark_fault(state);
            return Ok(());
        }
    };
    for i in 0..NQ {
        state.qdot[i] += delta[i];
        state.q[i] += dt * state.qdot[i];
    }
    if !state.is_finite() || state.qdot.iter().any(|v| v.abs() > 1e4) {
        mark_fault(state);
        return Ok(());
    }

    let clearance = state.q[IZ] - terrain.height(state.q[IX]);
    if clearance < model.fall_height_fraction * model.standing_height()
        || state.q[IPITCH].abs() > model.fall_pitch
    {
        state.done = true;
        state.fell = true;
    } else if state.t >= model.horizon * model.control_substeps {
        state.done = true;
    }
    Ok(())
}

fn mark_fault(state: &mut SimState) {
    state.done = true;
    state.fault = true;
}

/// One physics step returning the successor state.
pub fn dynamics_step(
    state: &SimState,
    excitations: &[f64],
    model: &WalkerModel,
    terrain: &TerrainProfile,
    dt: f64,
) -> Result<SimState> {
    let mut next = state.clone();
    step_in_place(&mut next, excitations, model, terrain, dt)?;
    Ok(next)
}

/// Named points of the walker for rendering and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub hip: [f64; 2],
    pub head: [f64; 2],
    /// Per leg: knee, ankle, heel, toe.
    pub legs: [[[f64; 2]; 4]; 2],
}

pub fn pose(state: &SimState, model: &WalkerModel) -> Pose {
    let t = model.torso();
    let (s, c) = state.q[IPITCH].sin_cos();
    let hip = [state.q[IX], state.q[IZ]];
    let head = [hip[0] - t.length * s, hip[1] + t.length * c];
    let mut legs = [[[0.0; 2]; 4]; 2];
    for side in [Side::Left, Side::Right] {
        let frame = LegFrame::new(&state.q, &state.qdot, side);
        let g = LegGeometry::new(model, side);
        legs[side.index()] = [
            frame.point(g.knee).pos,
            frame.point(g.ankle).pos,
            frame.point(g.heel).pos,
            frame.point(g.toe).pos,
        ];
    }
    Pose { hip, head, legs }
}

/// Heel and toe positions, left leg first.
pub fn contact_points(state: &SimState, model: &WalkerModel) -> [[f64; 2]; 4] {
    let p = pose(state, model);
    [p.legs[0][2], p.legs[0][3], p.legs[1][2], p.legs[1][3]]
}

/// Kinetic plus gravitational potential energy (J).
pub fn mechanical_energy(state: &SimState, model: &WalkerModel) -> f64 {
    let g = model.gravity;
    let t = model.torso();
    let (s, c) = state.q[IPITCH].sin_cos();
    let w = state.qdot[IPITCH];
    let pos = [state.q[IX] - t.com * s, state.q[IZ] + t.com * c];
    let vel = [
        state.qdot[IX] - t.com * c * w,
        state.qdot[IZ] - t.com * s * w,
    ];
    let mut energy = 0.5 * t.mass * (vel[0] * vel[0] + vel[1] * vel[1])
        + 0.5 * t.inertia * w * w
        + t.mass * g * pos[1];
    for side in [Side::Left, Side::Right] {
        let frame = LegFrame::new(&state.q, &state.qdot, side);
        let geom = LegGeometry::new(model, side);
        let qd = local_rates(&state.qdot, side);
        for (i, seg) in model.leg_segments(side).iter().enumerate() {
            let p = frame.point(geom.com[i]);
            let mut v = [0.0; 2];
            for col in 0..6 {
                v[0] += p.jac[0][col] * qd[col];
                v[1] += p.jac[1][col] * qd[col];
            }
            energy += 0.5 * seg.mass * (v[0] * v[0] + v[1] * v[1])
                + 0.5 * seg.inertia * frame.rate[i] * frame.rate[i]
                + seg.mass * g * p.pos[1];
        }
    }
    energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::model::MomentArm;
    use crate::muscle::MuscleParams;

    fn descriptor(arms: Vec<MomentArm>, rest: f64) -> MuscleDescriptor {
        MuscleDescriptor {
            name: "m".into(),
            side: Side::Left,
            rest_length_geom: rest,
            moment_arms: arms,
            params: MuscleParams::with_reference(1000.0, 10.0),
            group_id: 0,
        }
    }

    #[test]
    fn muscle_length_examples() {
        let d = descriptor(vec![MomentArm::constant(JointKind::Hip, 0.05)], 0.5);
        assert_eq!(muscle_length(&[0.0; 3], &d), 1.0);
        assert!((muscle_length(&[1.0, 0.0, 0.0], &d) - 0.9).abs() < 1e-15);
        let deep = descriptor(vec![MomentArm::constant(JointKind::Hip, 0.5)], 0.5);
        assert_eq!(muscle_length(&[2.0, 0.0, 0.0], &deep), MIN_MUSCLE_LENGTH);
    }

    #[test]
    fn mirrored_lengths_match() {
        let model = WalkerModel::default_biped();
        let mut state = rest_state(&model);
        state.q[3] = 0.4;
        state.q[4] = 0.7;
        state.q[5] = -0.2;
        let mirrored = state.mirrored(&model.mirror_permutation());
        for &(l, r) in &model.symmetry_pairs {
            let a = muscle_length(
                &clamped_leg_angles(&state, &model, Side::Left),
                &model.muscles[l],
            );
            let b = muscle_length(
                &clamped_leg_angles(&mirrored, &model, Side::Right),
                &model.muscles[r],
            );
            assert_eq!(a, b);
        }
    }

    #[test]
    fn torque_examples() {
        let model = WalkerModel::default_biped();
        let q = [0.0; NQ];
        assert_eq!(joint_torques(&vec![0.0; 16], &model, &q), [0.0; 6]);
        // Hip flexor alone: 100 N at 0.05 m.
        let mut f = vec![0.0; 16];
        f[0] = 100.0;
        let tau = joint_torques(&f, &model, &q);
        assert!((tau[0] - 5.0).abs() < 1e-12);
        assert_eq!(&tau[1..], &[0.0; 5]);
        // Knee flexor (0.035) against knee extensor (-0.045): balanced forces.
        let mut f = vec![0.0; 16];
        f[2] = 45.0;
        f[3] = 35.0;
        assert!(joint_torques(&f, &model, &q)[1].abs() < 1e-12);
    }

    fn rest_state(model: &WalkerModel) -> SimState {
        let mut q = [0.0; NQ];
        q[IZ] = model.standing_height();
        SimState {
            q,
            qdot: [0.0; NQ],
            activations: vec![0.0; model.num_muscles()],
            t: 0,
            done: false,
            fell: false,
            fault: false,
        }
    }

    #[test]
    fn rejects_non_positive_dt() {
        let model = WalkerModel::default_biped();
        let s = rest_state(&model);
        let t = TerrainProfile::flat();
        assert!(dynamics_step(&s, &vec![0.0; 16], &model, &t, 0.0).is_err());
        assert!(dynamics_step(&s, &vec![0.0; 15], &model, &t, 0.002).is_err());
        assert!(dynamics_step(&s, &vec![1.5; 16], &model, &t, 0.002).is_err());
    }

    #[test]
    fn chol_solves_spd() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x = [0.3, -1.2, 2.0];
        let b = mat_vec3(&a, &x);
        let got = chol_solve3(&a, &b).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
        assert!(chol_solve3(&[[0.0; 3]; 3], &b).is_none());
    }

    #[test]
    fn free_fall_accelerates_at_gravity() {
        let model = WalkerModel::default_biped();
        let mut s = rest_state(&model);
        s.q[IZ] = 5.0;
        let t = TerrainProfile::flat();
        let mut model_nm = model.clone();
        model_nm.muscles.clear();
        model_nm.symmetry_pairs.clear();
        s.activations.clear();
        step_in_place(&mut s, &[], &model_nm, &t, 0.002).unwrap();
        assert!((s.qdot[IZ] + 9.81 * 0.002).abs() < 1e-12);
        assert!(s.qdot[IX].abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let model = WalkerModel::default_biped();
        let mut s = rest_state(&model);
        s.q = [0.1, 0.85, 0.2, 0.4, 0.7, -0.3, -0.2, 0.3, 0.1];
        let geom = LegGeometry::new(&model, Side::Right);
        let base = LegFrame::new(&s.q, &s.qdot, Side::Right).point(geom.toe);
        let cols = [0, 1, 2, 6, 7, 8];
        for (c, &qi) in cols.iter().enumerate() {
            let h = 1e-6;
            let mut plus = s.q;
            let mut minus = s.q;
            plus[qi] += h;
            minus[qi] -= h;
            let pp = LegFrame::new(&plus, &s.qdot, Side::Right)
                .point(geom.toe)
                .pos;
            let pm = LegFrame::new(&minus, &s.qdot, Side::Right)
                .point(geom.toe)
                .pos;
            for a in 0..2 {
                let fd = (pp[a] - pm[a]) / (2.0 * h);
                assert!((fd - base.jac[a][c]).abs() < 1e-8);
            }
        }
    }
}
