//! Forward kinematics of the five-body chain (body plus proximal and distal
//! segments of both wings), blade-element placement and velocities, and the
//! Jacobians that map inertial point forces onto the generalized coordinates.
//!
//! Frames: inertial z is up. Body frame is x forward, y left, z up, oriented by
//! Z-Y-X Euler angles stored as `[roll, pitch, yaw]`. Only the left wing is
//! parameterized; the right wing is its mirror image across the body x-z
//! plane and shares the shoulder and elbow angles.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Unit, Vector3};

use crate::error::{Error, Result};
use crate::model::{matrix3, vector3, RobotModel};

pub const NQ: usize = 8;

/// `[p_x, p_y, p_z, roll, pitch, yaw, shoulder, elbow]`
pub type Coords = SVector<f64, NQ>;
/// Maps generalized velocities to a point velocity or segment angular velocity.
pub type PointJacobian = SMatrix<f64, 3, NQ>;

pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const ROLL: usize = 3;
    pub const PITCH: usize = 4;
    pub const YAW: usize = 5;
    pub const SHOULDER: usize = 6;
    pub const ELBOW: usize = 7;
}

pub const COORD_NAMES: [&str; NQ] = ["p_x", "p_y", "p_z", "roll", "pitch", "yaw", "shoulder", "elbow"];

/// Closest approach to pitch = +-pi/2 before the state is rejected.
pub const GIMBAL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedState {
    pub q: Coords,
    pub qd: Coords,
}

impl GeneralizedState {
    pub fn new(q: Coords, qd: Coords) -> Self {
        GeneralizedState { q, qd }
    }

    pub fn at_rest(q: Coords) -> Self {
        GeneralizedState { q, qd: Coords::zeros() }
    }

    /// Mirror image across the inertial x-z plane.
    pub fn mirrored(&self) -> Self {
        GeneralizedState {
            q: mirror_coords(&self.q),
            qd: mirror_coords(&self.qd),
        }
    }
}

/// Mirrors coordinates (or rates, or generalized forces) across the x-z plane.
pub fn mirror_coords(v: &Coords) -> Coords {
    let mut m = *v;
    m[idx::Y] = -m[idx::Y];
    m[idx::ROLL] = -m[idx::ROLL];
    m[idx::YAW] = -m[idx::YAW];
    m
}

pub fn mirror_vector(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, -v.y, v.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    fn mirror(self) -> Matrix3<f64> {
        match self {
            Side::Left => Matrix3::identity(),
            Side::Right => Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Body,
    Proximal(Side),
    Distal(Side),
}

/// Points that can carry an external force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachmentId {
    /// Quarter-chord point of a blade element.
    Element(usize),
    Thruster(usize),
}

impl std::fmt::Display for AttachmentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttachmentId::Element(i) => write!(f, "element {i}"),
            AttachmentId::Thruster(i) => write!(f, "thruster {i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

impl Pose {
    pub fn point(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * local
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WingPose {
    /// Origin at the shoulder.
    pub proximal: Pose,
    /// Origin at the elbow.
    pub distal: Pose,
    pub shoulder_axis: Vector3<f64>,
    pub elbow_axis: Vector3<f64>,
}

/// World poses of all five bodies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poses {
    pub body: Pose,
    /// Columns are the world angular velocity per unit roll, pitch, yaw rate.
    pub euler_rates: Matrix3<f64>,
    pub wings: [WingPose; 2],
}

impl Poses {
    pub fn wing(&self, side: Side) -> &WingPose {
        &self.wings[side.index()]
    }

    pub fn segment(&self, seg: Segment) -> &Pose {
        match seg {
            Segment::Body => &self.body,
            Segment::Proximal(s) => &self.wing(s).proximal,
            Segment::Distal(s) => &self.wing(s).distal,
        }
    }
}

/// Z-Y-X rotation for `[roll, pitch, yaw]`.
pub fn euler_rotation(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    (Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), roll))
    .into_inner()
}

/// Columns: world angular velocity produced by unit roll, pitch and yaw rates.
pub fn euler_rate_map(pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(cy * cp, -sy, 0.0, sy * cp, cy, 0.0, -sp, 0.0, 1.0)
}

fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner()
}

/// Spanwise collocation stations of the lifting line, theta_i = i pi / (m + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Stations {
    pub span: f64,
    pub theta: Vec<f64>,
    /// y = (S/2) cos(theta); positive on the left wing.
    pub y: Vec<f64>,
    pub chord: Vec<f64>,
    /// Spanwise width (S/2) sin(theta) pi / (m + 1), consistent with the
    /// Fourier quadrature of the circulation.
    pub width: Vec<f64>,
}

impl Stations {
    pub fn new(span: f64, m: usize, chord: impl Fn(f64) -> f64) -> Self {
        let dtheta = PI / (m + 1) as f64;
        let theta: Vec<f64> = (1..=m).map(|i| i as f64 * dtheta).collect();
        let y: Vec<f64> = theta.iter().map(|t| 0.5 * span * t.cos()).collect();
        let chord = y.iter().map(|&y| chord(y)).collect();
        let width = theta.iter().map(|t| 0.5 * span * t.sin() * dtheta).collect();
        Stations {
            span,
            theta,
            y,
            chord,
            width,
        }
    }

    pub fn for_model(model: &RobotModel) -> Self {
        Self::new(model.span_m, model.n_elements, |y| model.chord_at(y))
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Index of the element mirrored across the root.
    pub fn mirror_index(&self, i: usize) -> usize {
        self.len() - 1 - i
    }
}

/// Mass properties of one of the five rigid bodies, in its own local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBody {
    pub segment: Segment,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ElementMount {
    segment: Segment,
    local: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thruster {
    /// Body frame.
    pub position: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub max_thrust: f64,
}

/// Kinematic and inertial state of one blade element.
#[derive(Debug, Clone, PartialEq)]
pub struct BladeElementState {
    pub index: usize,
    pub y: f64,
    pub theta: f64,
    pub chord: f64,
    pub half_chord: f64,
    pub width: f64,
    pub segment: Segment,
    /// Quarter-chord point, inertial frame.
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Unit chordwise axis pointing to the leading edge.
    pub chord_axis: Vector3<f64>,
    /// Unit wing-surface normal (upper side).
    pub normal: Vector3<f64>,
    /// Air velocity relative to the element.
    pub relative_air: Vector3<f64>,
    /// Relative air velocity along the normal; positive flow strikes the lower surface.
    pub v_n: f64,
    /// Oncoming chordwise airspeed, positive when the air meets the leading edge.
    pub v_e: f64,
    pub jacobian: PointJacobian,
}

/// Generalized-force map of a point, B = (d p_dot / d q_dot)^T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceJacobian {
    pub b: SMatrix<f64, NQ, 3>,
}

impl ForceJacobian {
    pub fn from_point_jacobian(j: &PointJacobian) -> Self {
        ForceJacobian { b: j.transpose() }
    }

    /// Inertial velocity of the point, B^T q_dot.
    pub fn velocity(&self, qd: &Coords) -> Vector3<f64> {
        self.b.transpose() * qd
    }

    /// Generalized force of an inertial force applied at the point.
    pub fn generalized(&self, f: &Vector3<f64>) -> Coords {
        self.b * f
    }
}

/// Robot geometry prepared for repeated kinematic evaluation.
#[derive(Debug, Clone)]
pub struct Airframe {
    model: RobotModel,
    stations: Stations,
    shoulder_offset: Vector3<f64>,
    shoulder_axis: Vector3<f64>,
    elbow_axis: Vector3<f64>,
    elbow_offset: Vector3<f64>,
    bodies: Vec<RigidBody>,
    mounts: Vec<ElementMount>,
    thrusters: Vec<Thruster>,
}

impl Airframe {
    pub fn new(model: RobotModel) -> Result<Self> {
        model.validate()?;
        let stations = Stations::for_model(&model);
        let w = &model.wing;
        let shoulder_offset = vector3(&w.shoulder_offset_m);
        let shoulder_axis = vector3(&w.shoulder_axis).normalize();
        let elbow_axis = vector3(&w.elbow_axis).normalize();
        let elbow_offset = Vector3::new(0.0, w.proximal.length_m, 0.0);

        let mut bodies = vec![RigidBody {
            segment: Segment::Body,
            mass: model.body_mass_kg,
            com: Vector3::zeros(),
            inertia: matrix3(&model.body_inertia_kgm2),
        }];
        for side in [Side::Left, Side::Right] {
            let p = side.mirror();
            bodies.push(RigidBody {
                segment: Segment::Proximal(side),
                mass: w.proximal.mass_kg,
                com: p * vector3(&w.proximal.com_m),
                inertia: p * matrix3(&w.proximal.inertia_kgm2) * p,
            });
            bodies.push(RigidBody {
                segment: Segment::Distal(side),
                mass: w.distal.mass_kg,
                com: p * vector3(&w.distal.com_m),
                inertia: p * matrix3(&w.distal.inertia_kgm2) * p,
            });
        }

        let root = shoulder_offset.y;
        let elbow = root + w.proximal.length_m;
        let mounts = stations
            .y
            .iter()
            .map(|&y| {
                let r = y.abs();
                let side = if y >= 0.0 { Side::Left } else { Side::Right };
                let p = side.mirror();
                if r < root {
                    ElementMount {
                        segment: Segment::Body,
                        local: Vector3::new(shoulder_offset.x, y, shoulder_offset.z),
                    }
                } else if r <= elbow {
                    ElementMount {
                        segment: Segment::Proximal(side),
                        local: p * Vector3::new(0.0, r - root, 0.0),
                    }
                } else {
                    ElementMount {
                        segment: Segment::Distal(side),
                        local: p * Vector3::new(0.0, r - elbow, 0.0),
                    }
                }
            })
            .collect();

        let thrusters = model
            .thrusters
            .iter()
            .map(|t| Thruster {
                position: vector3(&t.position_m),
                axis: vector3(&t.axis).normalize(),
                max_thrust: t.max_thrust_n,
            })
            .collect();

        Ok(Airframe {
            model,
            stations,
            shoulder_offset,
            shoulder_axis,
            elbow_axis,
            elbow_offset,
            bodies,
            mounts,
            thrusters,
        })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn stations(&self) -> &Stations {
        &self.stations
    }

    pub fn rigid_bodies(&self) -> &[RigidBody] {
        &self.bodies
    }

    pub fn thrusters(&self) -> &[Thruster] {
        &self.thrusters
    }

    pub fn n_elements(&self) -> usize {
        self.stations.len()
    }

    pub fn element_segment(&self, i: usize) -> Segment {
        self.mounts[i].segment
    }

    pub fn forward_kinematics(&self, q: &Coords) -> Result<Poses> {
        let (roll, pitch, yaw) = (q[idx::ROLL], q[idx::PITCH], q[idx::YAW]);
        if !(pitch.abs() < PI / 2.0 - GIMBAL_MARGIN) {
            return Err(Error::GimbalLock { pitch });
        }
        let rb = euler_rotation(roll, pitch, yaw);
        let body = Pose {
            rotation: rb,
            origin: Vector3::new(q[idx::X], q[idx::Y], q[idx::Z]),
        };
        let wing = |side: Side| {
            let p = side.mirror();
            let sign = if side == Side::Left { 1.0 } else { -1.0 };
            let s_axis = sign * (p * self.shoulder_axis);
            let e_axis = sign * (p * self.elbow_axis);
            let r_prox = rb * axis_rotation(&s_axis, q[idx::SHOULDER]);
            let proximal = Pose {
                rotation: r_prox,
                origin: body.point(&(p * self.shoulder_offset)),
            };
            let distal = Pose {
                rotation: r_prox * axis_rotation(&e_axis, q[idx::ELBOW]),
                origin: proximal.point(&(p * self.elbow_offset)),
            };
            WingPose {
                proximal,
                distal,
                shoulder_axis: rb * s_axis,
                elbow_axis: r_prox * e_axis,
            }
        };
        Ok(Poses {
            body,
            euler_rates: euler_rate_map(pitch, yaw),
            wings: [wing(Side::Left), wing(Side::Right)],
        })
    }

    /// Velocity Jacobian of a world point rigidly attached to `seg`.
    pub fn point_jacobian(&self, poses: &Poses, seg: Segment, point: &Vector3<f64>) -> PointJacobian {
        let mut j = PointJacobian::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        let arm = point - poses.body.origin;
        for k in 0..3 {
            let w = poses.euler_rates.column(k).into_owned();
            j.set_column(3 + k, &w.cross(&arm));
        }
        let side = match seg {
            Segment::Body => return j,
            Segment::Proximal(s) | Segment::Distal(s) => s,
        };
        let wing = poses.wing(side);
        j.set_column(idx::SHOULDER, &wing.shoulder_axis.cross(&(point - wing.proximal.origin)));
        if let Segment::Distal(_) = seg {
            j.set_column(idx::ELBOW, &wing.elbow_axis.cross(&(point - wing.distal.origin)));
        }
        j
    }

    /// Angular-velocity Jacobian of a segment.
    pub fn angular_jacobian(&self, poses: &Poses, seg: Segment) -> PointJacobian {
        let mut j = PointJacobian::zeros();
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&poses.euler_rates);
        match seg {
            Segment::Body => {}
            Segment::Proximal(s) => j.set_column(idx::SHOULDER, &poses.wing(s).shoulder_axis),
            Segment::Distal(s) => {
                j.set_column(idx::SHOULDER, &poses.wing(s).shoulder_axis);
                j.set_column(idx::ELBOW, &poses.wing(s).elbow_axis);
            }
        }
        j
    }

    fn attachment(&self, id: AttachmentId) -> Result<(Segment, Vector3<f64>)> {
        match id {
            AttachmentId::Element(i) => self
                .mounts
                .get(i)
                .map(|m| (m.segment, m.local))
                .ok_or_else(|| Error::UnknownAttachment(id.to_string())),
            AttachmentId::Thruster(i) => self
                .thrusters
                .get(i)
                .map(|t| (Segment::Body, t.position))
                .ok_or_else(|| Error::UnknownAttachment(id.to_string())),
        }
    }

    /// Inertial position of an attachment point.
    pub fn attachment_position(&self, q: &Coords, id: AttachmentId) -> Result<Vector3<f64>> {
        let poses = self.forward_kinematics(q)?;
        let (seg, local) = self.attachment(id)?;
        Ok(poses.segment(seg).point(&local))
    }

    pub fn force_jacobian(&self, q: &Coords, id: AttachmentId) -> Result<ForceJacobian> {
        let (seg, local) = self.attachment(id)?;
        let poses = self.forward_kinematics(q)?;
        let point = poses.segment(seg).point(&local);
        Ok(ForceJacobian::from_point_jacobian(&self.point_jacobian(&poses, seg, &point)))
    }

    pub fn blade_elements(&self, state: &GeneralizedState, wind: &Vector3<f64>) -> Result<Vec<BladeElementState>> {
        let poses = self.forward_kinematics(&state.q)?;
        Ok(self.blade_elements_at(&poses, state, wind))
    }

    pub fn blade_elements_at(
        &self,
        poses: &Poses,
        state: &GeneralizedState,
        wind: &Vector3<f64>,
    ) -> Vec<BladeElementState> {
        let st = &self.stations;
        self.mounts
            .iter()
            .enumerate()
            .map(|(i, mount)| {
                let pose = poses.segment(mount.segment);
                let position = pose.point(&mount.local);
                let jacobian = self.point_jacobian(poses, mount.segment, &position);
                let velocity = jacobian * state.qd;
                let chord_axis = pose.rotation.column(0).into_owned();
                let normal = pose.rotation.column(2).into_owned();
                let relative_air = wind - velocity;
                BladeElementState {
                    index: i,
                    y: st.y[i],
                    theta: st.theta[i],
                    chord: st.chord[i],
                    half_chord: 0.5 * st.chord[i],
                    width: st.width[i],
                    segment: mount.segment,
                    position,
                    velocity,
                    chord_axis,
                    normal,
                    relative_air,
                    v_n: relative_air.dot(&normal),
                    v_e: -relative_air.dot(&chord_axis),
                    jacobian,
                }
            })
            .collect()
    }
}

/// Forward kinematics of `model` at `state`.
pub fn forward_kinematics(airframe: &Airframe, state: &GeneralizedState) -> Result<Poses> {
    airframe.forward_kinematics(&state.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn airframe() -> Airframe {
        Airframe::new(RobotModel::default_robot()).unwrap()
    }

    fn tip(af: &Airframe, poses: &Poses, side: Side) -> Vector3<f64> {
        let len = af.model().distal_length_m();
        let local = side.mirror() * Vector3::new(0.0, len, 0.0);
        poses.wing(side).distal.point(&local)
    }

    #[test]
    fn zero_configuration_is_reference() {
        let af = airframe();
        let poses = af.forward_kinematics(&Coords::zeros()).unwrap();
        for seg in [
            Segment::Body,
            Segment::Proximal(Side::Left),
            Segment::Distal(Side::Left),
            Segment::Proximal(Side::Right),
            Segment::Distal(Side::Right),
        ] {
            assert_eq!(poses.segment(seg).rotation, Matrix3::identity());
        }
        let half = 0.5 * af.model().span_m;
        assert!((tip(&af, &poses, Side::Left) - Vector3::new(0.0, half, 0.0)).norm() < 1e-15);
        assert!((tip(&af, &poses, Side::Right) - Vector3::new(0.0, -half, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pure_translation_moves_every_body() {
        let af = airframe();
        let base = af.forward_kinematics(&Coords::zeros()).unwrap();
        let mut q = Coords::zeros();
        q.fixed_rows_mut::<3>(0).copy_from(&Vector3::new(1.0, 2.0, 3.0));
        let moved = af.forward_kinematics(&q).unwrap();
        for side in [Side::Left, Side::Right] {
            let d = moved.wing(side).distal.origin - base.wing(side).distal.origin;
            assert!((d - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
        }
        assert_eq!(moved.body.origin, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn shoulder_raises_both_tips_equally() {
        let af = airframe();
        let mut q = Coords::zeros();
        q[idx::SHOULDER] = 0.4;
        q[idx::ELBOW] = -0.3;
        let poses = af.forward_kinematics(&q).unwrap();
        let (l, r) = (tip(&af, &poses, Side::Left), tip(&af, &poses, Side::Right));
        assert!(l.z > 0.0);
        assert!((l.z - r.z).abs() < 1e-15);
        assert!((l.x - r.x).abs() < 1e-15);
        assert!((l.y + r.y).abs() < 1e-15);
        // negative elbow angle sweeps the distal segment back
        assert!(l.x < 0.0);
    }

    #[test]
    fn gimbal_guard() {
        let af = airframe();
        let mut q = Coords::zeros();
        q[idx::PITCH] = PI / 2.0;
        assert!(matches!(af.forward_kinematics(&q), Err(Error::GimbalLock { .. })));
    }

    #[test]
    fn station_formula() {
        let s = Stations::new(0.3, 4, |_| 0.1);
        for (i, t) in s.theta.iter().enumerate() {
            let expect = (i + 1) as f64 * PI / 5.0;
            assert!((t - expect).abs() < 1e-15);
            assert!((s.y[i] - 0.15 * expect.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn quiescent_air_gives_no_relative_flow() {
        let af = airframe();
        let state = GeneralizedState::at_rest(Coords::zeros());
        for e in af.blade_elements(&state, &Vector3::zeros()).unwrap() {
            assert_eq!(e.v_n, 0.0);
            assert_eq!(e.v_e, 0.0);
        }
    }

    #[test]
    fn headwind_on_level_wing() {
        let af = airframe();
        let state = GeneralizedState::at_rest(Coords::zeros());
        let u = 1.3;
        for e in af.blade_elements(&state, &Vector3::new(-u, 0.0, 0.0)).unwrap() {
            assert!((e.v_e - u).abs() < 1e-15);
            assert!(e.v_n.abs() < 1e-15);
        }
    }

    #[test]
    fn downstroke_gives_positive_normal_flow() {
        let af = airframe();
        let mut qd = Coords::zeros();
        qd[idx::SHOULDER] = -2.0;
        let state = GeneralizedState::new(Coords::zeros(), qd);
        let els = af.blade_elements(&state, &Vector3::zeros()).unwrap();
        assert!(els.iter().filter(|e| e.segment != Segment::Body).all(|e| e.v_n > 0.0));
    }

    #[test]
    fn stations_stay_off_the_tips() {
        for m in 2..40 {
            let s = Stations::new(0.3, m, |_| 0.1);
            assert!(s.theta.iter().all(|t| t.sin() > 0.0));
            assert!(s.y.iter().all(|y| y.abs() < 0.15));
        }
    }

    #[test]
    fn unknown_attachment() {
        let af = airframe();
        let err = af.force_jacobian(&Coords::zeros(), AttachmentId::Element(99)).unwrap_err();
        assert!(matches!(err, Error::UnknownAttachment(_)));
        assert!(af.force_jacobian(&Coords::zeros(), AttachmentId::Thruster(4)).is_err());
    }

    #[test]
    fn body_point_translation_rows_are_identity() {
        let af = airframe();
        let mut q = Coords::zeros();
        q[idx::ROLL] = 0.3;
        q[idx::PITCH] = -0.2;
        q[idx::YAW] = 1.0;
        let b = af.force_jacobian(&q, AttachmentId::Thruster(0)).unwrap();
        let mut qd = Coords::zeros();
        qd.fixed_rows_mut::<3>(0).copy_from(&Vector3::new(0.4, -1.0, 2.0));
        assert!((b.velocity(&qd) - Vector3::new(0.4, -1.0, 2.0)).norm() < 1e-15);
    }

    /// Potential-energy oracle: gravity on a point mass at the wing tip through
    /// B equals minus the numerical gradient of m g z.
    #[test]
    fn gravity_through_b_matches_potential_gradient() {
        let af = airframe();
        let n = af.n_elements();
        let id = AttachmentId::Element(0);
        let (m, g) = (0.01, 9.81);
        let q = Coords::from_column_slice(&[0.1, -0.2, 0.3, 0.2, -0.3, 0.5, 0.4, -0.6]);
        let b = af.force_jacobian(&q, id).unwrap();
        let gen = b.generalized(&Vector3::new(0.0, 0.0, -m * g));
        let h = 1e-6;
        for j in 0..NQ {
            let mut qp = q;
            let mut qm = q;
            qp[j] += h;
            qm[j] -= h;
            let vp = m * g * af.attachment_position(&qp, id).unwrap().z;
            let vm = m * g * af.attachment_position(&qm, id).unwrap().z;
            let grad = (vp - vm) / (2.0 * h);
            assert!((gen[j] + grad).abs() < 1e-8, "coord {j}: {} vs {}", gen[j], -grad);
        }
        assert!(n > 1);
    }

    fn coords() -> impl Strategy<Value = Coords> {
        prop::array::uniform8(-1.0f64..1.0).prop_map(|a| {
            let mut q = Coords::from_column_slice(&a);
            q[idx::PITCH] *= 1.2;
            q
        })
    }

    proptest! {
        #[test]
        fn mirrored_states_mirror_elements(q in coords(), qd in coords(), w in prop::array::uniform3(-2.0f64..2.0)) {
            let af = airframe();
            let wind = Vector3::from(w);
            let s = GeneralizedState::new(q, qd);
            let a = af.blade_elements(&s, &wind).unwrap();
            let b = af.blade_elements(&s.mirrored(), &mirror_vector(&wind)).unwrap();
            for e in &a {
                let f = &b[af.stations().mirror_index(e.index)];
                prop_assert!((mirror_vector(&e.position) - f.position).norm() < 1e-14);
                prop_assert!((mirror_vector(&e.velocity) - f.velocity).norm() < 1e-13);
                prop_assert!((e.v_n - f.v_n).abs() < 1e-13);
                prop_assert!((e.v_e - f.v_e).abs() < 1e-13);
            }
        }

        #[test]
        fn jacobian_matches_finite_differences(q in coords(), qd in coords(), i in 0usize..16) {
            let af = airframe();
            let id = AttachmentId::Element(i);
            let b = af.force_jacobian(&q, id).unwrap();
            let h = 1e-6;
            let mut numeric = Vector3::zeros();
            for j in 0..NQ {
                let mut qp = q;
                let mut qm = q;
                qp[j] += h;
                qm[j] -= h;
                let col = (af.attachment_position(&qp, id).unwrap() - af.attachment_position(&qm, id).unwrap()) / (2.0 * h);
                prop_assert!((col - b.b.row(j).transpose()).norm() < 1e-8);
                numeric += col * qd[j];
            }
            let v = b.velocity(&qd);
            prop_assert!((v - numeric).norm() <= 1e-6 * v.norm().max(1e-3));
        }
    }
}
