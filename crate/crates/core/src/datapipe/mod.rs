//! Flight trace ingestion, windowing, labelling, normalization and splitting.

mod norm;
mod split;
mod trace;
mod window;

pub use norm::NormalizationStats;
pub use split::{split, split_flights, FlightSplit};
pub use trace::{FlightTrace, Phase};
pub use window::{label_windows, segment, window_count, Dataset, Window, WindowKind, DEFAULT_STRIDE};
