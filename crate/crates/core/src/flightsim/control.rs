use nalgebra::UnitQuaternion;

use super::model::{QuadParams, QuadState, Vec3, SPIN};
use crate::{Error, Result};

/// Cascaded PID gains.
#[derive(Clone, Debug, PartialEq)]
pub struct Gains {
    pub pos_kp: f64,
    pub pos_kd: f64,
    pub alt_kp: f64,
    pub alt_kd: f64,
    pub alt_ki: f64,
    pub att_kp: f64,
    pub att_kd: f64,
    pub yaw_kp: f64,
    pub yaw_kd: f64,
    /// Largest commanded roll or pitch (rad).
    pub max_tilt: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains {
            pos_kp: 1.5,
            pos_kd: 2.0,
            alt_kp: 6.0,
            alt_kd: 4.5,
            alt_ki: 0.5,
            att_kp: 100.0,
            att_kd: 20.0,
            yaw_kp: 16.0,
            yaw_kd: 8.0,
            max_tilt: 0.35,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pos_kp, self.pos_kd, self.alt_kp, self.alt_kd, self.alt_ki, self.att_kp, self.att_kd, self.yaw_kp,
            self.yaw_kd, self.max_tilt,
        ];
        if all.iter().all(|g| *g > 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("controller gains must be positive"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setpoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
}

/// Position, altitude and attitude loops acting on the true state.
#[derive(Clone, Debug)]
pub struct HoverController {
    pub gains: Gains,
    altitude_integral: f64,
}

impl HoverController {
    pub fn new(gains: Gains) -> Self {
        HoverController {
            gains,
            altitude_integral: 0.0,
        }
    }

    /// Rotor speed commands in `[0, max_rotor_speed]`.
    pub fn command(&mut self, state: &QuadState, sp: &Setpoint, params: &QuadParams, dt: f64) -> [f64; 4] {
        let g = &self.gains;
        let ep = sp.position - state.position;
        let ev = sp.velocity - state.velocity;

        // horizontal acceleration demand rotated into the heading frame
        let ax = g.pos_kp * ep.x + g.pos_kd * ev.x;
        let ay = g.pos_kp * ep.y + g.pos_kd * ev.y;
        let (s, c) = sp.yaw.sin_cos();
        let forward = ax * c + ay * s;
        let left = -ax * s + ay * c;
        let pitch = (forward / params.gravity).clamp(-g.max_tilt, g.max_tilt);
        let roll = (-left / params.gravity).clamp(-g.max_tilt, g.max_tilt);

        // integrate only near the setpoint so large steps do not wind up
        if ep.z.abs() < 0.1 {
            self.altitude_integral = (self.altitude_integral + ep.z * dt).clamp(-1.0, 1.0);
        }
        let az = g.alt_kp * ep.z + g.alt_kd * ev.z + g.alt_ki * self.altitude_integral;
        let (r0, p0, _) = state.orientation.euler_angles();
        let tilt = (r0.cos() * p0.cos()).max(0.5);
        let thrust = params.mass * (params.gravity + az) / tilt;

        let desired = UnitQuaternion::from_euler_angles(roll, pitch, sp.yaw);
        let mut err = state.orientation.inverse() * desired;
        if err.w < 0.0 {
            err = UnitQuaternion::new_unchecked(-err.into_inner());
        }
        let e = err.imag() * 2.0;
        let w = state.angular_velocity;
        let alpha = Vec3::new(
            g.att_kp * e.x - g.att_kd * w.x,
            g.att_kp * e.y - g.att_kd * w.y,
            g.yaw_kp * e.z - g.yaw_kd * w.z,
        );
        let torque = params.inertia.component_mul(&alpha);
        mix(params, thrust, &torque)
    }
}

/// Rotor speeds producing the requested collective thrust and body torque.
pub fn mix(params: &QuadParams, thrust: f64, torque: &Vec3) -> [f64; 4] {
    let pos = params.rotor_positions();
    let d2 = 4.0 * pos[0].x * pos[0].x;
    let kappa = 4.0 * params.torque_coeff / params.thrust_coeff;
    let max2 = params.max_rotor_speed * params.max_rotor_speed;
    let mut out = [0.0; 4];
    for i in 0..4 {
        let t = thrust / 4.0 + pos[i].y * torque.x / d2 - pos[i].x * torque.y / d2 + SPIN[i] * torque.z / kappa;
        out[i] = (t / params.thrust_coeff).clamp(0.0, max2).sqrt();
    }
    out
}

/// Propeller failure: which rotors are dead and from when.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrashScenario {
    pub class: u8,
    /// Seconds from takeoff.
    pub onset: f64,
}

/// All 15 failure sets, ordered by size then lexicographically; class id = index + 1.
pub const CLASS_ROTORS: [&[usize]; 15] = [
    &[0],
    &[1],
    &[2],
    &[3],
    &[0, 1],
    &[0, 2],
    &[0, 3],
    &[1, 2],
    &[1, 3],
    &[2, 3],
    &[0, 1, 2],
    &[0, 1, 3],
    &[0, 2, 3],
    &[1, 2, 3],
    &[0, 1, 2, 3],
];

/// Classes without triple or diagonal-pair failures.
pub const EXPERIMENTAL_CLASSES: [u8; 9] = [1, 2, 3, 4, 6, 7, 8, 9, 15];

pub fn failed_rotors(class: u8) -> Result<&'static [usize]> {
    match class {
        1..=15 => Ok(CLASS_ROTORS[class as usize - 1]),
        _ => Err(Error::Label {
            label: class as usize,
            classes: 15,
        }),
    }
}

pub fn class_of(rotors: &[usize]) -> Option<u8> {
    let mut sorted = rotors.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    CLASS_ROTORS.iter().position(|r| *r == sorted.as_slice()).map(|i| i as u8 + 1)
}

/// Zeroes the commands of failed rotors from onset onwards; class 0 never fails.
pub fn inject_fault(commands: &mut [f64; 4], scenario: &CrashScenario, t: f64) {
    if scenario.class == 0 || scenario.class > 15 || t < scenario.onset {
        return;
    }
    for &r in CLASS_ROTORS[scenario.class as usize - 1] {
        commands[r] = 0.0;
    }
}
