//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three operations: simulate a flight, cut it into labelled windows, and
//! compute the ROC curve of a set of anomaly scores.

use aeroguard_core::datapipe::{label_windows, segment, FlightTrace, WindowKind};
use aeroguard_core::flightsim::{simulate_run, SimConfig};
use aeroguard_core::scorer::{roc_auc, RocCurve};
use wasm_bindgen::prelude::*;

fn js(e: aeroguard_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One simulated flight with the standard sensor channels.
#[wasm_bindgen]
pub struct Flight {
    trace: FlightTrace,
}

impl Flight {
    pub fn simulate(class: u8, seed: u32) -> aeroguard_core::Result<Flight> {
        Ok(Flight {
            trace: simulate_run(&SimConfig::default(), class, seed as u64)?,
        })
    }

    pub fn trace(&self) -> &FlightTrace {
        &self.trace
    }

    /// Window kinds: 0 normal, 1 transition, 2 boundary, 3 post-crash.
    pub fn window_kinds(&self, window: usize, stride: usize) -> aeroguard_core::Result<Vec<u8>> {
        let mut ws = segment(&self.trace, window, stride, 0)?;
        label_windows(&mut ws, &self.trace);
        Ok(ws
            .iter()
            .map(|w| match w.kind {
                WindowKind::Normal => 0,
                WindowKind::Transition => 1,
                WindowKind::Boundary => 2,
                WindowKind::PostCrash => 3,
            })
            .collect())
    }
}

#[wasm_bindgen]
impl Flight {
    /// Crash class 0 flies without a fault; 1-15 fail rotor subsets.
    #[wasm_bindgen(constructor)]
    pub fn new(class: u8, seed: u32) -> Result<Flight, JsError> {
        Flight::simulate(class, seed).map_err(js)
    }

    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    #[wasm_bindgen(js_name = rateHz)]
    pub fn rate_hz(&self) -> f64 {
        self.trace.rate_hz
    }

    #[wasm_bindgen(js_name = channelNames)]
    pub fn channel_names(&self) -> Vec<String> {
        self.trace.channels.clone()
    }

    pub fn channel(&self, name: &str) -> Result<Vec<f32>, JsError> {
        self.trace.column(name).map_err(js)
    }

    /// Sample range of the fault transition as `[start, end]`, empty without a fault.
    pub fn transition(&self) -> Vec<u32> {
        self.trace.transition().map_or(Vec::new(), |r| vec![r.start as u32, r.end as u32])
    }

    #[wasm_bindgen(js_name = windowKinds)]
    pub fn js_window_kinds(&self, window: usize, stride: usize) -> Result<Vec<u8>, JsError> {
        self.window_kinds(window, stride).map_err(js)
    }
}

/// ROC curve as parallel coordinate arrays.
#[wasm_bindgen]
pub struct Roc {
    curve: RocCurve,
}

impl Roc {
    pub fn compute(scores: &[f64], labels: &[u8]) -> aeroguard_core::Result<Roc> {
        let labels: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
        Ok(Roc {
            curve: roc_auc(scores, &labels)?,
        })
    }
}

#[wasm_bindgen]
impl Roc {
    /// `labels` holds 1 for anomalous windows and 0 for normal ones.
    #[wasm_bindgen(constructor)]
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Roc, JsError> {
        Roc::compute(&scores, &labels).map_err(js)
    }

    pub fn auc(&self) -> f64 {
        self.curve.auc
    }

    pub fn fpr(&self) -> Vec<f64> {
        self.curve.points.iter().map(|p| p.0).collect()
    }

    pub fn tpr(&self) -> Vec<f64> {
        self.curve.points.iter().map(|p| p.1).collect()
    }
}
