//! Rigid-body quadrotor simulator with cascaded PID hover control and
//! propeller-failure injection inside the control loop.

mod control;
mod model;
mod sim;

pub use control::{
    class_of, failed_rotors, inject_fault, mix, CrashScenario, Gains, HoverController, Setpoint, CLASS_ROTORS,
    EXPERIMENTAL_CLASSES,
};
pub use model::{
    accelerations, accelerations_with, rotor_wrench, step_dynamics, step_dynamics_with, Accelerations, Disturbance, QuadParams,
    QuadState, Vec3, SPIN,
};
pub use sim::{campaign_threads, run_campaign, run_seed, sensor_row, simulate_run, RunOutcome, SimConfig, CHANNELS};
