use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Physical constants of a Quad-X airframe.
///
/// Rotor layout in the body frame (x forward, y left, z up):
/// 0 front-right, 1 rear-left, 2 front-left, 3 rear-right. Rotors 0 and 1
/// spin counter-clockwise, 2 and 3 clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadParams {
    pub mass: f64,
    pub arm_length: f64,
    pub inertia: Vec3,
    /// Thrust per rotor is `thrust_coeff * omega^2` (N).
    pub thrust_coeff: f64,
    /// Reaction torque per rotor is `torque_coeff * omega^2` (N m).
    pub torque_coeff: f64,
    pub gravity: f64,
    /// Linear drag force is `-drag * v` (N s/m).
    pub drag: f64,
    pub rotor_time_constant: f64,
    pub max_rotor_speed: f64,
    pub physics_hz: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            mass: 0.5,
            arm_length: 0.12,
            inertia: Vec3::new(2.3e-3, 2.3e-3, 4.0e-3),
            thrust_coeff: 3.0e-6,
            torque_coeff: 7.5e-8,
            gravity: 9.81,
            drag: 0.1,
            rotor_time_constant: 0.02,
            max_rotor_speed: 1200.0,
            physics_hz: 1000.0,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("inertia_x", self.inertia.x),
            ("inertia_y", self.inertia.y),
            ("inertia_z", self.inertia.z),
            ("thrust_coeff", self.thrust_coeff),
            ("torque_coeff", self.torque_coeff),
            ("gravity", self.gravity),
            ("rotor_time_constant", self.rotor_time_constant),
            ("max_rotor_speed", self.max_rotor_speed),
            ("physics_hz", self.physics_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.drag >= 0.0) {
            return Err(Error::config("drag must be non-negative"));
        }
        if self.hover_speed() >= self.max_rotor_speed {
            return Err(Error::config("max_rotor_speed is below hover speed"));
        }
        Ok(())
    }

    /// Rotor speed at which four rotors exactly balance gravity.
    pub fn hover_speed(&self) -> f64 {
        (self.mass * self.gravity / 4.0 / self.thrust_coeff).sqrt()
    }

    /// Body-frame rotor hub positions.
    pub fn rotor_positions(&self) -> [Vec3; 4] {
        let d = self.arm_length / std::f64::consts::SQRT_2;
        [
            Vec3::new(d, -d, 0.0),
            Vec3::new(-d, d, 0.0),
            Vec3::new(d, d, 0.0),
            Vec3::new(-d, -d, 0.0),
        ]
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.physics_hz
    }
}

/// Spin direction of each rotor, +1 clockwise seen from above.
pub const SPIN: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct QuadState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: UnitQuaternion<f64>,
    /// Body frame.
    pub angular_velocity: Vec3,
    pub rotor_speed: [f64; 4],
}

impl QuadState {
    /// Level, at rest, rotors spinning at hover speed.
    pub fn hovering(params: &QuadParams, position: Vec3, yaw: f64) -> Self {
        QuadState {
            position,
            velocity: Vec3::zeros(),
            orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            angular_velocity: Vec3::zeros(),
            rotor_speed: [params.hover_speed(); 4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).chain(self.angular_velocity.iter()).all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.rotor_speed.iter().all(|v| v.is_finite())
    }
}

/// Instantaneous accelerations of a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accelerations {
    /// World frame, m/s^2.
    pub linear: Vec3,
    /// Body frame, rad/s^2.
    pub angular: Vec3,
}

/// Body-frame force and torque from the current rotor speeds.
pub fn rotor_wrench(params: &QuadParams, rotor_speed: &[f64; 4]) -> (f64, Vec3) {
    let positions = params.rotor_positions();
    let mut thrust = 0.0;
    let mut torque = Vec3::zeros();
    for i in 0..4 {
        let w2 = rotor_speed[i] * rotor_speed[i];
        let t = params.thrust_coeff * w2;
        thrust += t;
        torque += positions[i].cross(&Vec3::new(0.0, 0.0, t));
        torque.z += SPIN[i] * params.torque_coeff * w2;
    }
    (thrust, torque)
}

/// External wrench from wind, on top of rotor forces and drag.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Disturbance {
    /// World frame, N.
    pub force: Vec3,
    /// Body frame, N m.
    pub torque: Vec3,
}

pub fn accelerations(state: &QuadState, params: &QuadParams) -> Accelerations {
    accelerations_with(state, params, &Disturbance::default())
}

pub fn accelerations_with(state: &QuadState, params: &QuadParams, disturbance: &Disturbance) -> Accelerations {
    let (thrust, torque) = rotor_wrench(params, &state.rotor_speed);
    let linear = state.orientation * Vec3::new(0.0, 0.0, thrust / params.mass)
        - Vec3::new(0.0, 0.0, params.gravity)
        - state.velocity * (params.drag / params.mass)
        + disturbance.force / params.mass;
    let w = state.angular_velocity;
    let iw = params.inertia.component_mul(&w);
    let angular = (torque + disturbance.torque - w.cross(&iw)).component_div(&params.inertia);
    Accelerations { linear, angular }
}

/// Advances the rigid body by `dt` under the given rotor commands.
///
/// Velocities are updated first; position advances with the mean of the old
/// and new velocity and the attitude with the new angular velocity. Rotor
/// speeds relax exactly toward their commands with the rotor time constant.
pub fn step_dynamics(state: &QuadState, commands: &[f64; 4], params: &QuadParams, dt: f64) -> Result<QuadState> {
    step_dynamics_with(state, commands, params, &Disturbance::default(), dt)
}

pub fn step_dynamics_with(
    state: &QuadState,
    commands: &[f64; 4],
    params: &QuadParams,
    disturbance: &Disturbance,
    dt: f64,
) -> Result<QuadState> {
    if !(dt > 0.0) {
        return Err(Error::contract("time step must be positive"));
    }
    let acc = accelerations_with(state, params, disturbance);
    let velocity = state.velocity + acc.linear * dt;
    let position = state.position + (state.velocity + velocity) * (0.5 * dt);
    let angular_velocity = state.angular_velocity + acc.angular * dt;

    let w = angular_velocity;
    let q = state.orientation.into_inner();
    let dq = q * Quaternion::new(0.0, w.x, w.y, w.z) * (0.5 * dt);
    let orientation = UnitQuaternion::new_normalize(q + dq);

    let decay = (-dt / params.rotor_time_constant).exp();
    let mut rotor_speed = [0.0; 4];
    for i in 0..4 {
        let cmd = commands[i].clamp(0.0, params.max_rotor_speed);
        rotor_speed[i] = cmd + (state.rotor_speed[i] - cmd) * decay;
    }

    let next = QuadState {
        position,
        velocity,
        orientation,
        angular_velocity,
        rotor_speed,
    };
    if !next.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite quadrotor state: position {:?}, velocity {:?}, angular velocity {:?}",
            state.position, state.velocity, state.angular_velocity
        )));
    }
    Ok(next)
}
