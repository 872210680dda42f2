//! Serial revolute chains: forward kinematics, the geometric Jacobian and
//! damped least-squares inverse kinematics.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{Pose, Quat, Vec3};
use crate::linalg::solve_dense;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("chain has no joints")]
    EmptyChain,
    #[error("joint {joint} has invalid limits [{lo}, {hi}]")]
    InvalidLimits { joint: usize, lo: f64, hi: f64 },
    #[error("joint {0} has a zero axis")]
    ZeroAxis(usize),
    #[error("expected {expected} joint values, got {found}")]
    JointCount { expected: usize, found: usize },
    #[error("joint {joint} value {value} outside [{lo}, {hi}]")]
    JointLimit { joint: usize, value: f64, lo: f64, hi: f64 },
    #[error("target not reached after {iterations} iterations (position error {position_error:.2e} m, rotation error {rotation_error:.2e} rad)")]
    IkUnreachable { iterations: usize, position_error: f64, rotation_error: f64 },
    #[error("target pose is not finite")]
    NonFiniteTarget,
}

/// Revolute joint: rotation about `axis` (in the joint frame) applied after
/// the fixed `origin` offset from the previous link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub axis: Vec3,
    pub origin: Pose,
    pub limits: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain {
    joints: Vec<Joint>,
    base: Pose,
    flange_to_ee: Pose,
}

impl SerialChain {
    pub fn new(joints: Vec<Joint>, base: Pose, flange_to_ee: Pose) -> Result<SerialChain, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::EmptyChain);
        }
        let mut joints = joints;
        for (i, j) in joints.iter_mut().enumerate() {
            let (lo, hi) = j.limits;
            if !(lo < hi) {
                return Err(KinematicsError::InvalidLimits { joint: i, lo, hi });
            }
            j.axis = j.axis.try_normalize().ok_or(KinematicsError::ZeroAxis(i))?;
        }
        Ok(SerialChain { joints, base, flange_to_ee })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn base(&self) -> Pose {
        self.base
    }

    pub fn flange_to_ee(&self) -> Pose {
        self.flange_to_ee
    }

    fn check_len(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::JointCount { expected: self.joints.len(), found: q.len() });
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<(), KinematicsError> {
        self.check_len(q)?;
        for (i, (j, &v)) in self.joints.iter().zip(q).enumerate() {
            if !(v >= j.limits.0 && v <= j.limits.1) {
                return Err(KinematicsError::JointLimit { joint: i, value: v, lo: j.limits.0, hi: j.limits.1 });
            }
        }
        Ok(())
    }

    /// World pose of each link frame (after its joint rotation), then the
    /// end effector. No limit check.
    pub fn link_poses(&self, q: &[f64]) -> Result<Vec<Pose>, KinematicsError> {
        self.check_len(q)?;
        let mut out = Vec::with_capacity(self.joints.len() + 1);
        let mut t = self.base;
        for (j, &v) in self.joints.iter().zip(q) {
            t = t.compose(&j.origin).compose(&Pose::from_rotation(Quat::from_axis_angle(j.axis, v)));
            out.push(t);
        }
        out.push(t.compose(&self.flange_to_ee));
        Ok(out)
    }

    fn fk_unchecked(&self, q: &[f64]) -> Pose {
        let mut t = self.base;
        for (j, &v) in self.joints.iter().zip(q) {
            t = t.compose(&j.origin).compose(&Pose::from_rotation(Quat::from_axis_angle(j.axis, v)));
        }
        t.compose(&self.flange_to_ee)
    }

    /// Base-to-end-effector transform.
    pub fn fk(&self, q: &[f64]) -> Result<Pose, KinematicsError> {
        self.check_limits(q)?;
        Ok(self.fk_unchecked(q))
    }

    /// Geometric Jacobian in the world frame: column `i` is
    /// `(ωᵢ × (p_ee − pᵢ), ωᵢ)` for joint axis `ωᵢ` through `pᵢ`.
    pub fn jacobian(&self, q: &[f64]) -> Result<Vec<[f64; 6]>, KinematicsError> {
        self.check_len(q)?;
        let links = self.link_poses(q)?;
        let ee = links[links.len() - 1].translation;
        Ok(self
            .joints
            .iter()
            .zip(&links)
            .map(|(j, frame)| {
                let w = frame.apply_vector(j.axis);
                let v = w.cross(ee - frame.translation);
                [v.x, v.y, v.z, w.x, w.y, w.z]
            })
            .collect())
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits.0, j.limits.1);
        }
    }
}

/// Position error and rotation-vector error `log(R_target R_currentᵀ)`.
pub fn pose_error(current: &Pose, target: &Pose) -> [f64; 6] {
    let dp = target.translation - current.translation;
    let dr = target.rotation.mul(current.rotation.conjugate()).to_rotation_vector();
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkParams {
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_iters: usize,
    pub damping: f64,
    /// Largest joint change per iteration (radians).
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self { tol_pos: 1e-4, tol_rot: 1e-3, max_iters: 200, damping: 0.05, max_step: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    pub iterations: usize,
    pub position_error: f64,
    pub rotation_error: f64,
}

fn error_norms(e: &[f64; 6]) -> (f64, f64) {
    ((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt(), (e[3] * e[3] + e[4] * e[4] + e[5] * e[5]).sqrt())
}

/// Damped least squares: `Δq = Jᵀ (J Jᵀ + λ² I)⁻¹ e`, scaled so no joint moves
/// more than `max_step`, then clamped to the limits.
pub fn ik(chain: &SerialChain, target: &Pose, q0: &[f64], params: &IkParams) -> Result<IkSolution, KinematicsError> {
    if !target.is_finite() {
        return Err(KinematicsError::NonFiniteTarget);
    }
    chain.check_len(q0)?;
    let n = chain.dof();
    let mut q = q0.to_vec();
    chain.clamp(&mut q);
    let lambda2 = params.damping * params.damping;
    let mut iterations = 0;
    loop {
        let e = pose_error(&chain.fk_unchecked(&q), target);
        let (pe, re) = error_norms(&e);
        if pe <= params.tol_pos && re <= params.tol_rot {
            return Ok(IkSolution { q, iterations, position_error: pe, rotation_error: re });
        }
        if iterations == params.max_iters {
            return Err(KinematicsError::IkUnreachable { iterations, position_error: pe, rotation_error: re });
        }
        let jac = chain.jacobian(&q)?;
        let mut a = [0.0; 36];
        for r in 0..6 {
            for c in 0..6 {
                a[r * 6 + c] = jac.iter().map(|col| col[r] * col[c]).sum::<f64>();
            }
            a[r * 6 + r] += lambda2;
        }
        let Some(y) = solve_dense(&a, &e, 6) else {
            return Err(KinematicsError::IkUnreachable { iterations, position_error: pe, rotation_error: re });
        };
        let mut dq: Vec<f64> = jac.iter().map(|col| (0..6).map(|r| col[r] * y[r]).sum()).collect();
        let largest = dq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if largest > params.max_step {
            let s = params.max_step / largest;
            dq.iter_mut().for_each(|v| *v *= s);
        }
        for i in 0..n {
            q[i] += dq[i];
        }
        chain.clamp(&mut q);
        iterations += 1;
    }
}

/// Solves every pose in turn, seeding each with the previous solution.
/// On failure returns the waypoint index with the error.
pub fn solve_trajectory(
    chain: &SerialChain,
    poses: &[Pose],
    q0: &[f64],
    params: &IkParams,
) -> Result<Vec<Vec<f64>>, (usize, KinematicsError)> {
    let mut seed = q0.to_vec();
    let mut out = Vec::with_capacity(poses.len());
    for (i, p) in poses.iter().enumerate() {
        let sol = ik(chain, p, &seed, params).map_err(|e| (i, e))?;
        seed.clone_from(&sol.q);
        out.push(sol.q);
    }
    Ok(out)
}

/// A generic 6R arm (about 0.85 m reach) with a tool flange pointing down.
pub fn demo_arm() -> SerialChain {
    use core::f64::consts::PI;
    let lim = (-2.0 * PI, 2.0 * PI);
    let j = |axis: Vec3, origin: Vec3| Joint { axis, origin: Pose::from_translation(origin), limits: lim };
    SerialChain::new(
        alloc::vec![
            j(Vec3::Z, Vec3::new(0.0, 0.0, 0.16)),
            j(Vec3::Y, Vec3::new(0.0, 0.0, 0.0)),
            j(Vec3::Y, Vec3::new(0.0, 0.0, 0.42)),
            j(Vec3::Z, Vec3::new(0.0, 0.0, 0.39)),
            j(Vec3::Y, Vec3::new(0.0, 0.0, 0.0)),
            j(Vec3::Z, Vec3::new(0.0, 0.0, 0.1)),
        ],
        Pose::IDENTITY,
        Pose::new(Quat::IDENTITY, Vec3::new(0.0, 0.0, 0.05)),
    )
    .expect("static chain is valid")
}
