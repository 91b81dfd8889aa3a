//! Flat `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;

use aeroguard_core::autoenc::AutoEncConfig;
use aeroguard_core::dclnn::DclnnConfig;
use aeroguard_core::flightsim::{SimConfig, EXPERIMENTAL_CLASSES};
use aeroguard_core::nn::AdamConfig;
use aeroguard_core::train::Schedule;
use aeroguard_core::{Error, Result};

/// Every accepted key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "7"),
    ("sim.runs", "300"),
    ("sim.classes", "all"),
    ("sim.sensor_noise", "true"),
    ("sim.gust_force_std", "0.1"),
    ("sim.gust_torque_std", "0.002"),
    ("sim.gust_time_constant", "0.3"),
    ("sim.climb_time", "2"),
    ("sim.hover_time", "8"),
    ("sim.capture_time", "3"),
    ("sim.transition_time", "1.5"),
    ("sim.climb_height", "3"),
    ("sim.sensor_hz", "100"),
    ("sim.physics_hz", "1000"),
    ("sim.mass", "0.5"),
    ("sim.arm_length", "0.12"),
    ("sim.thrust_coeff", "3e-6"),
    ("sim.torque_coeff", "7.5e-8"),
    ("sim.drag", "0.1"),
    ("sim.rotor_time_constant", "0.02"),
    ("sim.max_rotor_speed", "1200"),
    ("data.split", "0.7"),
    ("data.stride", "10"),
    ("detector.window", "25"),
    ("detector.channels", "acc_x,acc_y,acc_z,angvel_x,angvel_y,angvel_z"),
    ("detector.filters", "48,64,96"),
    ("detector.kernels", "5,5,3"),
    ("detector.hidden", "256"),
    ("detector.lstm_layers", "2"),
    ("detector.epochs", "100"),
    ("detector.batch_size", "512"),
    ("detector.micro_batch", "128"),
    ("detector.learning_rate", "0.01"),
    ("detector.epsilon", "0.01"),
    ("detector.lambda", "auto"),
    ("detector.percentile", "99"),
    ("classifier.window", "100"),
    ("classifier.channels", "angvel_x,angvel_y,angvel_z"),
    ("classifier.classes", "all"),
    ("classifier.filters", "48,64,96"),
    ("classifier.kernels", "5,5,3"),
    ("classifier.hidden", "128"),
    ("classifier.lstm_layers", "2"),
    ("classifier.dense", "128"),
    ("classifier.dropout", "0.2"),
    ("classifier.epochs", "15"),
    ("classifier.batch_size", "64"),
    ("classifier.micro_batch", "64"),
    ("classifier.learning_rate", "0.01"),
    ("classifier.epsilon", "0.01"),
    ("pipeline.threshold", "auto"),
    ("profile.window", "100"),
    ("profile.runs", "100"),
    ("profile.warmup", "10"),
];

/// Resolved settings: defaults overlaid with a config file and flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

/// How the pipeline gates windows before classification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    /// The detector's stored threshold.
    Auto,
    /// Every window reaches the classifier.
    Disabled,
    Fixed(f64),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), i + 1) {
                return Err(Error::Config(format!("line {}: `{key}` already set on line {first}", i + 1)));
            }
            cfg.set(key, value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overrides one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no default for `{key}`"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("`{key}` must be {what}, got `{}`", self.get(key))))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parsed(key, "a number")?;
        if !v.is_finite() {
            return Err(Error::Config(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.parsed(key, "true or false")
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` must be a comma-separated list of integers")))
            })
            .collect()
    }

    pub fn names(&self, key: &str) -> Vec<String> {
        self.get(key).split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }

    /// `all`, `experimental` or a comma-separated list of classes 1-15.
    pub fn classes(&self, key: &str) -> Result<Vec<u8>> {
        let classes: Vec<u8> = match self.get(key) {
            "all" => (1..=15).collect(),
            "experimental" => EXPERIMENTAL_CLASSES.to_vec(),
            list => list
                .split(',')
                .map(|s| s.trim().parse::<u8>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("`{key}` must be all, experimental or a list of classes")))?,
        };
        if classes.is_empty() || classes.iter().any(|&c| c > 15) {
            return Err(Error::Config(format!("`{key}` classes must lie in 0..=15")));
        }
        Ok(classes)
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut c = SimConfig::default();
        let p = &mut c.params;
        p.mass = self.f64("sim.mass")?;
        p.arm_length = self.f64("sim.arm_length")?;
        p.thrust_coeff = self.f64("sim.thrust_coeff")?;
        p.torque_coeff = self.f64("sim.torque_coeff")?;
        p.drag = self.f64("sim.drag")?;
        p.rotor_time_constant = self.f64("sim.rotor_time_constant")?;
        p.max_rotor_speed = self.f64("sim.max_rotor_speed")?;
        p.physics_hz = self.f64("sim.physics_hz")?;
        c.climb_time = self.f64("sim.climb_time")?;
        c.hover_time = self.f64("sim.hover_time")?;
        c.capture_time = self.f64("sim.capture_time")?;
        c.transition_time = self.f64("sim.transition_time")?;
        c.climb_height = self.f64("sim.climb_height")?;
        c.sensor_hz = self.f64("sim.sensor_hz")?;
        c.gust_force_std = self.f64("sim.gust_force_std")?;
        c.gust_torque_std = self.f64("sim.gust_torque_std")?;
        c.gust_time_constant = self.f64("sim.gust_time_constant")?;
        if !self.bool("sim.sensor_noise")? {
            c.noise_std = [0.0; 6];
        }
        c.validate()?;
        Ok(c)
    }

    fn adam(&self, prefix: &str) -> Result<AdamConfig> {
        Ok(AdamConfig {
            learning_rate: self.f64(&format!("{prefix}.learning_rate"))?,
            epsilon: self.f64(&format!("{prefix}.epsilon"))?,
            ..AdamConfig::default()
        })
    }

    fn schedule(&self, prefix: &str) -> Result<Schedule> {
        Ok(Schedule {
            epochs: self.usize(&format!("{prefix}.epochs"))?,
            batch_size: self.usize(&format!("{prefix}.batch_size"))?,
            micro_batch: self.usize(&format!("{prefix}.micro_batch"))?,
        })
    }

    pub fn autoenc_config(&self) -> Result<AutoEncConfig> {
        let c = AutoEncConfig {
            window: self.usize("detector.window")?,
            channels: self.names("detector.channels").len(),
            filters: self.usize_list("detector.filters")?,
            kernels: self.usize_list("detector.kernels")?,
            hidden: self.usize("detector.hidden")?,
            lstm_layers: self.usize("detector.lstm_layers")?,
            schedule: self.schedule("detector")?,
            adam: self.adam("detector")?,
            seed: self.seed()?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn dclnn_config(&self) -> Result<DclnnConfig> {
        let c = DclnnConfig {
            window: self.usize("classifier.window")?,
            channels: self.names("classifier.channels").len(),
            filters: self.usize_list("classifier.filters")?,
            kernels: self.usize_list("classifier.kernels")?,
            hidden: self.usize("classifier.hidden")?,
            lstm_layers: self.usize("classifier.lstm_layers")?,
            dense: self.usize("classifier.dense")?,
            classes: self.classes("classifier.classes")?,
            dropout: self.f64("classifier.dropout")?,
            schedule: self.schedule("classifier")?,
            adam: self.adam("classifier")?,
            seed: self.seed()?,
        };
        c.validate()?;
        Ok(c)
    }

    /// `auto` uses the detector's stored threshold; `none` disables gating.
    pub fn gate(&self) -> Result<Gate> {
        match self.get("pipeline.threshold") {
            "auto" => Ok(Gate::Auto),
            "none" => Ok(Gate::Disabled),
            "inf" => Ok(Gate::Fixed(f64::INFINITY)),
            _ => {
                let v: f64 = self.parsed("pipeline.threshold", "auto, none, inf or a number")?;
                if !(v >= 0.0) {
                    return Err(Error::Config("pipeline.threshold must be non-negative".into()));
                }
                Ok(Gate::Fixed(v))
            }
        }
    }

    /// `None` selects the default regularization.
    pub fn lambda(&self) -> Result<Option<f64>> {
        match self.get("detector.lambda") {
            "auto" => Ok(None),
            _ => self.f64("detector.lambda").map(Some),
        }
    }

    /// Every key, sorted, in the file syntax.
    pub fn resolved(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
