use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::control::{inject_fault, CrashScenario, Gains, HoverController, Setpoint};
use super::model::{accelerations_with, step_dynamics_with, Disturbance, QuadParams, QuadState, Vec3};
use crate::datapipe::{FlightTrace, Phase};
use crate::{Error, Result};

/// The 18 telemetry channels in emission order.
pub const CHANNELS: [&str; 18] = [
    "acc_x", "acc_y", "acc_z", "angacc_x", "angacc_y", "angacc_z", "vel_x", "vel_y", "vel_z", "angvel_x", "angvel_y",
    "angvel_z", "pos_x", "pos_y", "pos_z", "roll", "pitch", "yaw",
];

/// Flight profile, sensor model and per-run variation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub params: QuadParams,
    pub gains: Gains,
    pub climb_time: f64,
    pub hover_time: f64,
    pub capture_time: f64,
    /// Length of the labelled fault transition after onset.
    pub transition_time: f64,
    pub climb_height: f64,
    pub sensor_hz: f64,
    /// Noise standard deviation for acc, angacc, vel, angvel, pos, euler channel groups.
    pub noise_std: [f64; 6],
    /// Stationary std of each world-frame gust force component (N).
    pub gust_force_std: f64,
    /// Stationary std of each body-frame gust torque component (N m).
    pub gust_torque_std: f64,
    /// Correlation time of the gust processes (s).
    pub gust_time_constant: f64,
    /// Half-width of the uniform horizontal start offset (m).
    pub position_jitter: f64,
    /// Half-width of the uniform hover altitude variation (m).
    pub altitude_jitter: f64,
    pub random_yaw: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            params: QuadParams::default(),
            gains: Gains::default(),
            climb_time: 2.0,
            hover_time: 8.0,
            capture_time: 3.0,
            transition_time: 1.5,
            climb_height: 3.0,
            sensor_hz: 100.0,
            noise_std: [0.05, 0.5, 0.02, 0.01, 0.01, 0.005],
            gust_force_std: GUST_FORCE_STD,
            gust_torque_std: GUST_TORQUE_STD,
            gust_time_constant: 0.3,
            position_jitter: 0.2,
            altitude_jitter: 0.3,
            random_yaw: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.gains.validate()?;
        for (name, v) in [
            ("climb_time", self.climb_time),
            ("hover_time", self.hover_time),
            ("capture_time", self.capture_time),
            ("transition_time", self.transition_time),
            ("climb_height", self.climb_height),
            ("sensor_hz", self.sensor_hz),
            ("gust_time_constant", self.gust_time_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.transition_time > self.capture_time {
            return Err(Error::config("transition_time exceeds capture_time"));
        }
        let ratio = self.params.physics_hz / self.sensor_hz;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::config("physics_hz must be an integer multiple of sensor_hz"));
        }
        let spreads = [self.position_jitter, self.altitude_jitter, self.gust_force_std, self.gust_torque_std];
        if self.noise_std.iter().chain(&spreads).any(|v| !(*v >= 0.0)) {
            return Err(Error::config("noise, gusts and jitter must be non-negative"));
        }
        Ok(())
    }

    pub fn onset(&self) -> f64 {
        self.climb_time + self.hover_time
    }

    pub fn duration(&self) -> f64 {
        self.onset() + self.capture_time
    }

    /// No sensor noise and no gusts.
    pub fn without_noise(mut self) -> Self {
        self.noise_std = [0.0; 6];
        self.gust_force_std = 0.0;
        self.gust_torque_std = 0.0;
        self
    }

    fn phase(&self, t: f64, class: u8) -> Phase {
        if t < self.climb_time {
            Phase::Upflight
        } else if class == 0 || t < self.onset() {
            Phase::Hover
        } else if t < self.onset() + self.transition_time {
            Phase::Transition
        } else {
            Phase::PostCrash
        }
    }
}

const GUST_FORCE_STD: f64 = 0.1;
const GUST_TORQUE_STD: f64 = 2e-3;

/// Ornstein-Uhlenbeck gust force and torque, sampled exactly at each step.
struct Gusts {
    decay: f64,
    force: Option<Normal<f64>>,
    torque: Option<Normal<f64>>,
    current: Disturbance,
}

impl Gusts {
    fn new(config: &SimConfig, rng: &mut ChaCha8Rng) -> Self {
        let decay = (-config.params.dt() / config.gust_time_constant).exp();
        let innovation = (1.0 - decay * decay).sqrt();
        let normal = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite std"));
        let (f0, t0) = (normal(config.gust_force_std), normal(config.gust_torque_std));
        let draw = |d: &Option<Normal<f64>>, r: &mut ChaCha8Rng| {
            d.as_ref().map_or(Vec3::zeros(), |d| Vec3::new(d.sample(r), d.sample(r), d.sample(r)))
        };
        let current = Disturbance {
            force: draw(&f0, rng),
            torque: draw(&t0, rng),
        };
        Gusts {
            decay,
            force: normal(config.gust_force_std * innovation),
            torque: normal(config.gust_torque_std * innovation),
            current,
        }
    }

    fn advance(&mut self, rng: &mut ChaCha8Rng) {
        for (value, d) in [(&mut self.current.force, &self.force), (&mut self.current.torque, &self.torque)] {
            if let Some(d) = d {
                *value = *value * self.decay + Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
            }
        }
    }
}

/// Body-frame IMU and navigation readings of one state, before noise.
pub fn sensor_row(state: &QuadState, params: &QuadParams) -> [f64; 18] {
    sensor_row_with(state, params, &Disturbance::default())
}

fn sensor_row_with(state: &QuadState, params: &QuadParams, disturbance: &Disturbance) -> [f64; 18] {
    let acc = accelerations_with(state, params, disturbance);
    let specific = state.orientation.inverse() * (acc.linear + Vec3::new(0.0, 0.0, params.gravity));
    let (roll, pitch, yaw) = state.orientation.euler_angles();
    let v = state.velocity;
    let w = state.angular_velocity;
    let p = state.position;
    let a = acc.angular;
    [
        specific.x, specific.y, specific.z, a.x, a.y, a.z, v.x, v.y, v.z, w.x, w.y, w.z, p.x, p.y, p.z, roll, pitch, yaw,
    ]
}

/// Climb setpoint: smoothstep from the start altitude to the hover altitude.
fn climb_setpoint(start: Vec3, height: f64, climb_time: f64, yaw: f64, t: f64) -> Setpoint {
    let u = (t / climb_time).clamp(0.0, 1.0);
    let s = u * u * (3.0 - 2.0 * u);
    let ds = if u < 1.0 { 6.0 * u * (1.0 - u) / climb_time } else { 0.0 };
    Setpoint {
        position: start + Vec3::new(0.0, 0.0, height * s),
        velocity: Vec3::new(0.0, 0.0, height * ds),
        yaw,
    }
}

/// One flight: climb, hover, fault at onset, capture.
///
/// `class` 0 flies the whole profile without a fault.
pub fn simulate_run(config: &SimConfig, class: u8, seed: u64) -> Result<FlightTrace> {
    config.validate()?;
    if class > 15 {
        return Err(Error::Label {
            label: class as usize,
            classes: 16,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = config.position_jitter;
    let jitter = |r: &mut ChaCha8Rng, w: f64| if w > 0.0 { r.random_range(-w..w) } else { 0.0 };
    let start = Vec3::new(jitter(&mut rng, j), jitter(&mut rng, j), 0.0);
    let height = config.climb_height + jitter(&mut rng, config.altitude_jitter);
    let yaw = if config.random_yaw {
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
    } else {
        0.0
    };

    let params = &config.params;
    let dt = params.dt();
    let decimation = (params.physics_hz / config.sensor_hz).round() as usize;
    let ticks = (config.duration() * params.physics_hz).round() as usize;
    let scenario = CrashScenario {
        class,
        onset: config.onset(),
    };
    let noise: Vec<Option<Normal<f64>>> = config
        .noise_std
        .iter()
        .map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite std")))
        .collect();

    let mut gusts = Gusts::new(config, &mut rng);
    let mut state = QuadState::hovering(params, start, yaw);
    let mut controller = HoverController::new(config.gains.clone());
    let mut samples = Vec::with_capacity(ticks / decimation * CHANNELS.len());
    let mut phases = Vec::with_capacity(ticks / decimation);
    for tick in 0..ticks {
        let t = tick as f64 / params.physics_hz;
        if tick % decimation == 0 {
            let row = sensor_row_with(&state, params, &gusts.current);
            for (k, v) in row.iter().enumerate() {
                let n = noise[k / 3].as_ref().map_or(0.0, |d| d.sample(&mut rng));
                samples.push((v + n) as f32);
            }
            phases.push(config.phase(t, class));
        }
        let sp = climb_setpoint(start, height, config.climb_time, yaw, t);
        let mut cmd = controller.command(&state, &sp, params, dt);
        inject_fault(&mut cmd, &scenario, t);
        state = step_dynamics_with(&state, &cmd, params, &gusts.current, dt)?;
        gusts.advance(&mut rng);
    }
    FlightTrace::new(
        config.sensor_hz,
        CHANNELS.iter().map(|s| s.to_string()).collect(),
        samples,
        phases,
        class,
        seed,
    )
}

/// Result of one campaign run.
#[derive(Debug)]
pub struct RunOutcome {
    pub index: usize,
    pub class: u8,
    pub seed: u64,
    pub trace: Result<FlightTrace>,
}

/// Seed of run `index` within a campaign.
pub fn run_seed(campaign_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(campaign_seed);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Worker count for campaigns: `AEROGUARD_THREADS` if set, else available cores.
pub fn campaign_threads() -> usize {
    std::env::var("AEROGUARD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `n_runs` flights cycling through `classes`; output is ordered by run index.
pub fn run_campaign(config: &SimConfig, n_runs: usize, classes: &[u8], seed: u64, threads: usize) -> Result<Vec<RunOutcome>> {
    if n_runs == 0 {
        return Err(Error::config("a campaign needs at least one run"));
    }
    if classes.is_empty() {
        return Err(Error::config("a campaign needs at least one class"));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c > 15) {
        return Err(Error::Label {
            label: bad as usize,
            classes: 16,
        });
    }
    config.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new((0..n_runs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n_runs) {
            s.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= n_runs {
                    break;
                }
                let class = classes[index % classes.len()];
                let seed = run_seed(seed, index);
                let trace = simulate_run(config, class, seed);
                if let Err(e) = &trace {
                    log::warn!("run {index} (class {class}) failed: {e}");
                }
                slots.lock().expect("campaign slot lock")[index] = Some(RunOutcome {
                    index,
                    class,
                    seed,
                    trace,
                });
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("campaign slot lock")
        .into_iter()
        .map(|o| o.expect("every run reports"))
        .collect())
}
