use super::trace::{FlightTrace, Phase};
use crate::{Error, Result};

/// Stride between consecutive window starts.
pub const DEFAULT_STRIDE: usize = 10;

/// How a window relates to the fault timeline of its flight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowKind {
    /// Entirely upflight or hover.
    Normal,
    /// At least half of the window lies in the fault transition.
    Transition,
    /// Touches the transition but below the overlap threshold.
    Boundary,
    /// Contains post-crash samples without reaching the transition threshold.
    PostCrash,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// Row-major `W x C`.
    pub values: Vec<f32>,
    pub start: usize,
    /// Crash class for transition windows, `None` otherwise.
    pub label: Option<u8>,
    pub kind: WindowKind,
    pub normalized: bool,
    /// Index of the source flight.
    pub flight: usize,
    /// Crash class of the source flight, 0 for fault-free.
    pub flight_class: u8,
}

impl Window {
    pub fn row(&self, t: usize, channels: usize) -> &[f32] {
        &self.values[t * channels..(t + 1) * channels]
    }
}

pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if window == 0 || stride == 0 || len < window {
        0
    } else {
        (len - window) / stride + 1
    }
}

/// Cuts `trace` into windows starting every `stride` samples.
///
/// Window `i` covers samples `[i*stride, i*stride + window)`. Windows are
/// unlabelled (kind `Normal`) until [`label_windows`] runs.
pub fn segment(trace: &FlightTrace, window: usize, stride: usize, flight: usize) -> Result<Vec<Window>> {
    if window == 0 || stride == 0 {
        return Err(Error::contract("window size and stride must be positive"));
    }
    if trace.len() < window {
        return Err(Error::contract(format!(
            "trace of {} samples is shorter than window {window}",
            trace.len()
        )));
    }
    let c = trace.num_channels();
    Ok((0..window_count(trace.len(), window, stride))
        .map(|i| {
            let start = i * stride;
            Window {
                values: trace.samples[start * c..(start + window) * c].to_vec(),
                start,
                label: None,
                kind: WindowKind::Normal,
                normalized: false,
                flight,
                flight_class: trace.crash_class,
            }
        })
        .collect())
}

/// Assigns kind and label from the per-sample phases of `trace`.
pub fn label_windows(windows: &mut [Window], trace: &FlightTrace) {
    for w in windows {
        let len = w.values.len() / trace.num_channels();
        let phases = &trace.phases[w.start..w.start + len];
        let overlap = phases.iter().filter(|&&p| p == Phase::Transition).count();
        w.flight_class = trace.crash_class;
        (w.kind, w.label) = if overlap > 0 && 2 * overlap >= len {
            (WindowKind::Transition, Some(trace.crash_class))
        } else if phases.iter().all(|p| p.is_normal()) {
            (WindowKind::Normal, None)
        } else if phases.contains(&Phase::PostCrash) {
            (WindowKind::PostCrash, None)
        } else {
            (WindowKind::Boundary, None)
        };
    }
}

/// Windows of one channel layout and length, drawn from one or more flights.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub channels: Vec<String>,
    pub window: usize,
    pub windows: Vec<Window>,
}

impl Dataset {
    /// Segments and labels every trace; flight ids are trace indices.
    pub fn from_traces(traces: &[FlightTrace], channels: &[&str], window: usize, stride: usize) -> Result<Dataset> {
        let mut windows = Vec::new();
        for (i, trace) in traces.iter().enumerate() {
            let trace = trace.select_channels(channels)?;
            let mut ws = segment(&trace, window, stride, i)?;
            label_windows(&mut ws, &trace);
            windows.extend(ws);
        }
        Ok(Dataset {
            channels: channels.iter().map(|s| s.to_string()).collect(),
            window,
            windows,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn filter(&self, keep: impl Fn(&Window) -> bool) -> Dataset {
        Dataset {
            channels: self.channels.clone(),
            window: self.window,
            windows: self.windows.iter().filter(|w| keep(w)).cloned().collect(),
        }
    }

    pub fn of_kind(&self, kind: WindowKind) -> Dataset {
        self.filter(|w| w.kind == kind)
    }

    /// Column projection preserving the requested order.
    pub fn select_channels(&self, names: &[&str]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.channels
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::UnknownChannel(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let c = self.num_channels();
        let windows = self
            .windows
            .iter()
            .map(|w| Window {
                values: w
                    .values
                    .chunks_exact(c)
                    .flat_map(|row| idx.iter().map(move |&j| row[j]))
                    .collect(),
                ..w.clone()
            })
            .collect();
        Ok(Dataset {
            channels: names.iter().map(|s| s.to_string()).collect(),
            window: self.window,
            windows,
        })
    }

    /// Values of all windows stacked into `[N, W, C]` order.
    pub fn stacked(&self, indices: &[usize]) -> Vec<f32> {
        indices.iter().flat_map(|&i| self.windows[i].values.iter().copied()).collect()
    }
}
