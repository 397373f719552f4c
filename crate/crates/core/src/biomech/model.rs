use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::muscle::MuscleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn mirrored(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Hip,
    Knee,
    Ankle,
}

impl JointKind {
    pub const ALL: [JointKind; 3] = [JointKind::Hip, JointKind::Knee, JointKind::Ankle];

    pub fn index(self) -> usize {
        match self {
            JointKind::Hip => 0,
            JointKind::Knee => 1,
            JointKind::Ankle => 2,
        }
    }
}

/// Rigid body of the walker. `com` is measured from the proximal joint along
/// the segment axis (for the torso: upward from the hip).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub mass: f64,
    pub length: f64,
    pub inertia: f64,
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub side: Side,
    pub kind: JointKind,
    pub limit_low: f64,
    pub limit_high: f64,
}

/// How a muscle's moment arm depends on the joint angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArmProfile {
    /// Constant arm: excursion `r * q`.
    Constant,
    /// Arm `r * cos(q - peak)`, largest at `peak`; excursion
    /// `r * (sin(q - peak) + sin(peak))` so that it vanishes at `q = 0`.
    Cosine { peak: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentArm {
    pub joint: JointKind,
    /// Signed moment arm (m); positive arms shorten the muscle as `q` grows.
    pub r: f64,
    pub profile: ArmProfile,
}

impl MomentArm {
    pub fn constant(joint: JointKind, r: f64) -> Self {
        Self {
            joint,
            r,
            profile: ArmProfile::Constant,
        }
    }

    pub fn cosine(joint: JointKind, r: f64, peak: f64) -> Self {
        Self {
            joint,
            r,
            profile: ArmProfile::Cosine { peak },
        }
    }

    #[inline]
    pub fn arm(&self, q: f64) -> f64 {
        match self.profile {
            ArmProfile::Constant => self.r,
            ArmProfile::Cosine { peak } => self.r * (q - peak).cos(),
        }
    }

    /// Shortening of the muscle path (m) relative to `q = 0`.
    #[inline]
    pub fn excursion(&self, q: f64) -> f64 {
        match self.profile {
            ArmProfile::Constant => self.r * q,
            ArmProfile::Cosine { peak } => self.r * ((q - peak).sin() + peak.sin()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleDescriptor {
    pub name: String,
    pub side: Side,
    /// Geometric rest length of the muscle path (m).
    pub rest_length_geom: f64,
    /// Arms about joints of the muscle's own leg.
    pub moment_arms: Vec<MomentArm>,
    pub params: MuscleParams,
    pub group_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    /// Viscous tangential coefficient before the Coulomb cap (N s/m).
    pub tangential_damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub forward: f64,
    pub balance: f64,
    pub effort: f64,
    pub fall_penalty: f64,
    /// Width (rad^2) of the pitch Gaussian in the balance term.
    pub balance_width: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            forward: 1.0,
            balance: 0.1,
            effort: 0.05,
            fall_penalty: 10.0,
            balance_width: 0.25,
        }
    }
}

/// Planar biped: torso plus thigh, shank and foot per leg, three joints and
/// eight muscles per leg.
///
/// Segment order is `[torso, thigh_l, shank_l, foot_l, thigh_r, shank_r,
/// foot_r]`, joint order `[hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerModel {
    pub segments: Vec<Segment>,
    /// Distance from the ankle back to the heel contact point (m).
    pub heel_offset: f64,
    pub joints: Vec<Joint>,
    pub muscles: Vec<MuscleDescriptor>,
    pub symmetry_pairs: Vec<(usize, usize)>,
    pub contact: ContactParams,
    pub joint_limit_stiffness: f64,
    pub joint_limit_damping: f64,
    pub joint_damping: f64,
    pub gravity: f64,
    /// Physics step (s).
    pub dt: f64,
    pub control_substeps: usize,
    /// Episode horizon in control steps.
    pub horizon: usize,
    /// Fall when hip height above terrain drops below this fraction of
    /// standing height.
    pub fall_height_fraction: f64,
    pub fall_pitch: f64,
    pub reward: RewardWeights,
}

pub const NUM_GROUPS_DEFAULT: usize = 8;

impl Default for WalkerModel {
    fn default() -> Self {
        Self::default_biped()
    }
}

impl WalkerModel {
    pub fn default_biped() -> Self {
        let seg = |name: &str, mass: f64, length: f64, com: f64| Segment {
            name: name.to_string(),
            mass,
            length,
            inertia: mass * length * length / 12.0,
            com,
        };
        let mut segments = vec![seg("torso", 36.0, 0.6, 0.25)];
        for side in ["l", "r"] {
            segments.push(seg(&format!("thigh_{side}"), 7.5, 0.45, 0.2));
            segments.push(seg(&format!("shank_{side}"), 3.5, 0.45, 0.19));
            segments.push(seg(&format!("foot_{side}"), 1.25, 0.24, 0.06));
        }

        let mut joints = Vec::new();
        for side in [Side::Left, Side::Right] {
            let s = if side == Side::Left { "l" } else { "r" };
            joints.push(Joint {
                name: format!("hip_{s}"),
                side,
                kind: JointKind::Hip,
                limit_low: -0.8,
                limit_high: 2.0,
            });
            joints.push(Joint {
                name: format!("knee_{s}"),
                side,
                kind: JointKind::Knee,
                limit_low: 0.0,
                limit_high: 2.4,
            });
            joints.push(Joint {
                name: format!("ankle_{s}"),
                side,
                kind: JointKind::Ankle,
                limit_low: -0.8,
                limit_high: 0.6,
            });
        }

        use JointKind::*;
        // (name, rest length, arms, f0_ref)
        let groups: Vec<(&str, f64, Vec<MomentArm>, f64)> = vec![
            (
                "hip_flexor",
                0.2,
                vec![MomentArm::constant(Hip, 0.05)],
                1500.0,
            ),
            (
                "hip_extensor",
                0.2,
                vec![MomentArm::constant(Hip, -0.06)],
                2000.0,
            ),
            (
                "knee_flexor",
                0.2,
                vec![MomentArm::constant(Knee, 0.035)],
                1000.0,
            ),
            (
                "knee_extensor",
                0.22,
                vec![MomentArm::constant(Knee, -0.045)],
                3000.0,
            ),
            (
                "ankle_dorsiflexor",
                0.2,
                vec![MomentArm::constant(Ankle, 0.04)],
                800.0,
            ),
            (
                "ankle_plantarflexor",
                0.2,
                vec![MomentArm::constant(Ankle, -0.05)],
                3000.0,
            ),
            (
                "hamstring",
                0.35,
                vec![
                    MomentArm::cosine(Hip, -0.05, 0.3),
                    MomentArm::cosine(Knee, 0.035, 0.8),
                ],
                1500.0,
            ),
            (
                "rectus_femoris",
                0.35,
                vec![
                    MomentArm::cosine(Hip, 0.04, 0.2),
                    MomentArm::cosine(Knee, -0.04, 0.6),
                ],
                1200.0,
            ),
        ];
        let mut muscles = Vec::new();
        for side in [Side::Left, Side::Right] {
            let s = if side == Side::Left { "l" } else { "r" };
            for (g, (name, rest, arms, f0)) in groups.iter().enumerate() {
                muscles.push(MuscleDescriptor {
                    name: format!("{name}_{s}"),
                    side,
                    rest_length_geom: *rest,
                    moment_arms: arms.clone(),
                    params: MuscleParams::with_reference(*f0, 10.0),
                    group_id: g,
                });
            }
        }
        let n = groups.len();
        let symmetry_pairs = (0..n).map(|i| (i, i + n)).collect();

        Self {
            segments,
            heel_offset: 0.06,
            joints,
            muscles,
            symmetry_pairs,
            contact: ContactParams {
                stiffness: 2.0e4,
                damping: 500.0,
                friction: 1.0,
                tangential_damping: 2000.0,
            },
            joint_limit_stiffness: 1000.0,
            joint_limit_damping: 10.0,
            joint_damping: 0.5,
            gravity: 9.81,
            dt: 0.002,
            control_substeps: 10,
            horizon: 1000,
            fall_height_fraction: 0.5,
            fall_pitch: 1.0,
            reward: RewardWeights::default(),
        }
    }

    pub fn torso(&self) -> &Segment {
        &self.segments[0]
    }

    /// Thigh, shank and foot of one leg.
    pub fn leg_segments(&self, side: Side) -> [&Segment; 3] {
        let o = 1 + 3 * side.index();
        [
            &self.segments[o],
            &self.segments[o + 1],
            &self.segments[o + 2],
        ]
    }

    pub fn joint(&self, side: Side, kind: JointKind) -> &Joint {
        &self.joints[3 * side.index() + kind.index()]
    }

    /// Hip height above the ground when standing straight.
    pub fn standing_height(&self) -> f64 {
        let [thigh, shank, _] = self.leg_segments(Side::Left);
        thigh.length + shank.length
    }

    pub fn control_dt(&self) -> f64 {
        self.dt * self.control_substeps as f64
    }

    pub fn num_muscles(&self) -> usize {
        self.muscles.len()
    }

    /// Number of bilateral symmetry groups.
    pub fn num_groups(&self) -> usize {
        self.muscles
            .iter()
            .map(|m| m.group_id + 1)
            .max()
            .unwrap_or(0)
    }

    /// Index permutation exchanging each muscle with its bilateral partner.
    pub fn mirror_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.muscles.len()).collect();
        for &(l, r) in &self.symmetry_pairs {
            perm[l] = r;
            perm[r] = l;
        }
        perm
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: WalkerModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.len() != 7 {
            return Err(SdeError::config(format!(
                "expected 7 segments, found {}",
                self.segments.len()
            )));
        }
        for s in &self.segments {
            if !(s.mass > 0.0 && s.length > 0.0 && s.inertia > 0.0) || !s.com.is_finite() {
                return Err(SdeError::config(format!(
                    "segment {} has invalid constants",
                    s.name
                )));
            }
        }
        if self.joints.len() != 6 {
            return Err(SdeError::config(format!(
                "expected 6 joints, found {}",
                self.joints.len()
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let side = if i < 3 { Side::Left } else { Side::Right };
            if j.side != side || j.kind != JointKind::ALL[i % 3] {
                return Err(SdeError::config(format!(
                    "joint {} is out of order",
                    j.name
                )));
            }
            if !(j.limit_low.is_finite() && j.limit_high.is_finite() && j.limit_low < j.limit_high)
            {
                return Err(SdeError::config(format!(
                    "joint {} has invalid limits",
                    j.name
                )));
            }
        }
        for k in 0..3 {
            let (l, r) = (&self.joints[k], &self.joints[k + 3]);
            if l.limit_low != r.limit_low || l.limit_high != r.limit_high {
                return Err(SdeError::config(format!(
                    "joints {} and {} differ",
                    l.name, r.name
                )));
            }
            let (a, b) = (&self.segments[1 + k], &self.segments[4 + k]);
            if (a.mass, a.length, a.inertia, a.com) != (b.mass, b.length, b.inertia, b.com) {
                return Err(SdeError::config(format!(
                    "segments {} and {} differ",
                    a.name, b.name
                )));
            }
        }
        for m in &self.muscles {
            if !m.moment_arms.iter().any(|a| a.r != 0.0) {
                return Err(SdeError::config(format!(
                    "muscle {} has no moment arm",
                    m.name
                )));
            }
            if !(m.rest_length_geom > 0.0) {
                return Err(SdeError::config(format!(
                    "muscle {} has invalid rest length",
                    m.name
                )));
            }
            m.params
                .validate()
                .map_err(|e| SdeError::config(format!("muscle {}: {e}", m.name)))?;
        }
        let n = self.muscles.len();
        let mut seen = vec![false; n];
        for &(l, r) in &self.symmetry_pairs {
            if l >= n || r >= n || seen[l] || seen[r] || l == r {
                return Err(SdeError::config(format!(
                    "invalid symmetry pair ({l}, {r})"
                )));
            }
            seen[l] = true;
            seen[r] = true;
            let (ml, mr) = (&self.muscles[l], &self.muscles[r]);
            if ml.side != Side::Left || mr.side != Side::Right {
                return Err(SdeError::config(format!(
                    "pair ({l}, {r}) is not left/right"
                )));
            }
            if ml.rest_length_geom != mr.rest_length_geom
                || ml.moment_arms != mr.moment_arms
                || ml.params != mr.params
                || ml.group_id != mr.group_id
            {
                return Err(SdeError::config(format!(
                    "bilateral muscles {} and {} differ",
                    ml.name, mr.name
                )));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(SdeError::config(format!(
                "muscle {} has no bilateral counterpart",
                self.muscles[i].name
            )));
        }
        let groups = self.num_groups();
        let mut count = vec![0usize; groups];
        for m in &self.muscles {
            count[m.group_id] += 1;
        }
        if count.iter().any(|&c| c != 2) {
            return Err(SdeError::config(
                "every symmetry group needs exactly two muscles",
            ));
        }
        let positive = [
            self.contact.stiffness,
            self.contact.damping,
            self.dt,
            self.gravity,
            self.fall_height_fraction,
            self.fall_pitch,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.control_substeps == 0 || self.horizon == 0 {
            return Err(SdeError::config(
                "integration and contact constants must be positive",
            ));
        }
        if self.contact.friction < 0.0
            || self.contact.tangential_damping < 0.0
            || self.joint_damping < 0.0
            || self.joint_limit_damping < 0.0
            || self.joint_limit_stiffness < 0.0
        {
            return Err(SdeError::config(
                "damping and friction constants must be non-negative",
            ));
        }
        Ok(())
    }
}
