use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use crate::{Error, Result};

/// Flight phase of a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Upflight,
    Hover,
    Transition,
    PostCrash,
}

impl Phase {
    pub fn letter(self) -> char {
        match self {
            Phase::Upflight => 'U',
            Phase::Hover => 'H',
            Phase::Transition => 'F',
            Phase::PostCrash => 'P',
        }
    }

    pub fn from_letter(c: &str) -> Option<Self> {
        match c {
            "U" => Some(Phase::Upflight),
            "H" => Some(Phase::Hover),
            "F" => Some(Phase::Transition),
            "P" => Some(Phase::PostCrash),
            _ => None,
        }
    }

    pub fn is_normal(self) -> bool {
        matches!(self, Phase::Upflight | Phase::Hover)
    }
}

/// A multi-channel telemetry recording with per-sample phase labels.
///
/// `samples` is row-major `T x C`. `crash_class` is 0 for a fault-free flight.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightTrace {
    pub rate_hz: f64,
    pub channels: Vec<String>,
    pub samples: Vec<f32>,
    pub phases: Vec<Phase>,
    pub crash_class: u8,
    pub seed: u64,
}

impl FlightTrace {
    pub fn new(
        rate_hz: f64,
        channels: Vec<String>,
        samples: Vec<f32>,
        phases: Vec<Phase>,
        crash_class: u8,
        seed: u64,
    ) -> Result<Self> {
        let trace = FlightTrace {
            rate_hz,
            channels,
            samples,
            phases,
            crash_class,
            seed,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0) {
            return Err(Error::contract("sample rate must be positive"));
        }
        if self.channels.is_empty() {
            return Err(Error::contract("trace has no channels"));
        }
        if self.crash_class > 15 {
            return Err(Error::Label {
                label: self.crash_class as usize,
                classes: 16,
            });
        }
        if self.samples.len() != self.phases.len() * self.channels.len() {
            return Err(Error::dim(
                "trace",
                &[self.phases.len(), self.channels.len()],
                &[self.samples.len()],
            ));
        }
        let runs = self
            .phases
            .iter()
            .enumerate()
            .filter(|&(i, p)| *p == Phase::Transition && (i == 0 || self.phases[i - 1] != Phase::Transition))
            .count();
        match (self.crash_class, runs) {
            (0, 0) | (1..=15, 1) => Ok(()),
            (0, _) => Err(Error::contract("fault-free trace contains a transition region")),
            _ => Err(Error::contract(format!(
                "crash trace needs exactly one contiguous transition region, found {runs}"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let c = self.num_channels();
        &self.samples[t * c..(t + 1) * c]
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    /// Values of one channel over time.
    pub fn column(&self, name: &str) -> Result<Vec<f32>> {
        let j = self.channel_index(name)?;
        Ok(self.samples.iter().skip(j).step_by(self.num_channels()).copied().collect())
    }

    /// Sample range labelled as fault transition, if any.
    pub fn transition(&self) -> Option<Range<usize>> {
        let start = self.phases.iter().position(|&p| p == Phase::Transition)?;
        let len = self.phases[start..].iter().take_while(|&&p| p == Phase::Transition).count();
        Some(start..start + len)
    }

    /// Column projection in the order requested.
    pub fn select_channels(&self, names: &[&str]) -> Result<FlightTrace> {
        let idx = names.iter().map(|n| self.channel_index(n)).collect::<Result<Vec<_>>>()?;
        let samples = (0..self.len())
            .flat_map(|t| idx.iter().map(move |&j| (t, j)))
            .map(|(t, j)| self.samples[t * self.num_channels() + j])
            .collect();
        Ok(FlightTrace {
            channels: names.iter().map(|s| s.to_string()).collect(),
            samples,
            ..self.clone()
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(
            out,
            "# aeroguard-trace v1; rate_hz={}; crash_class={}; seed={}",
            self.rate_hz, self.crash_class, self.seed
        )?;
        writeln!(out, "t,{},phase", self.channels.join(","))?;
        let mut line = String::new();
        for t in 0..self.len() {
            line.clear();
            let _ = write!(line, "{:.6}", t as f64 / self.rate_hz);
            for v in self.row(t) {
                let _ = write!(line, ",{v:.8e}");
            }
            let _ = write!(line, ",{}", self.phases[t].letter());
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<FlightTrace> {
        let mut lines = input.lines();
        let mut head = |n: usize| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Parse { line: n, msg: "unexpected end of file".into() })
        };
        let (rate_hz, crash_class, seed) = parse_header(&head(1)?)?;
        let columns = head(2)?;
        let names: Vec<&str> = columns.split(',').collect();
        if names.len() < 3 || names[0] != "t" || names[names.len() - 1] != "phase" {
            return Err(Error::Parse {
                line: 2,
                msg: "column header must start with `t`, end with `phase` and name at least one channel".into(),
            });
        }
        let channels: Vec<String> = names[1..names.len() - 1].iter().map(|s| s.to_string()).collect();

        let mut samples = Vec::new();
        let mut phases = Vec::new();
        for (i, line) in lines.enumerate() {
            let (n, line) = (i + 3, line?);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(Error::Format {
                    line: n,
                    msg: format!("expected {} fields, found {}", names.len(), fields.len()),
                });
            }
            fields[0]
                .parse::<f64>()
                .map_err(|e| Error::Parse { line: n, msg: format!("t: {e}") })?;
            for (name, f) in channels.iter().zip(&fields[1..fields.len() - 1]) {
                let v = f
                    .parse::<f32>()
                    .map_err(|e| Error::Parse { line: n, msg: format!("{name}: {e}") })?;
                samples.push(v);
            }
            let last = fields[fields.len() - 1];
            let phase = Phase::from_letter(last).ok_or_else(|| Error::Parse {
                line: n,
                msg: format!("unknown phase `{last}`"),
            })?;
            phases.push(phase);
        }
        FlightTrace::new(rate_hz, channels, samples, phases, crash_class, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FlightTrace> {
        FlightTrace::read_csv(BufReader::new(File::open(path)?))
    }
}

fn parse_header(line: &str) -> Result<(f64, u8, u64)> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let body = line
        .strip_prefix("# aeroguard-trace v1")
        .ok_or_else(|| bad("missing `# aeroguard-trace v1` header".into()))?;
    let (mut rate, mut class, mut seed) = (None, None, None);
    for part in body.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("malformed field `{part}`")))?;
        let err = |e: &dyn std::fmt::Display| bad(format!("{k}: {e}"));
        match k.trim() {
            "rate_hz" => rate = Some(v.trim().parse::<f64>().map_err(|e| err(&e))?),
            "crash_class" => class = Some(v.trim().parse::<u8>().map_err(|e| err(&e))?),
            "seed" => seed = Some(v.trim().parse::<u64>().map_err(|e| err(&e))?),
            other => return Err(bad(format!("unknown header field `{other}`"))),
        }
    }
    match (rate, class, seed) {
        (Some(r), Some(c), Some(s)) => Ok((r, c, s)),
        _ => Err(bad("header needs rate_hz, crash_class and seed".into())),
    }
}
