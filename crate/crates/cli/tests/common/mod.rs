#![allow(dead_code)]

use std::path::Path;

use aeroguard_cli::commands::Context;
use aeroguard_cli::config::RunConfig;

/// A configuration small enough to run the whole pipeline in seconds.
pub const TINY: &str = "
seed = 11
sim.runs = 30
sim.classes = 1,2,3
detector.filters = 4,4,4
detector.hidden = 8
detector.epochs = 1
detector.batch_size = 64
detector.micro_batch = 64
classifier.classes = 1,2,3
classifier.filters = 4,4,4
classifier.hidden = 8
classifier.dense = 8
classifier.epochs = 2
profile.window = 25
profile.runs = 3
profile.warmup = 1
";

pub fn tiny(out: &Path) -> Context {
    Context {
        config: RunConfig::parse(TINY).unwrap(),
        out: out.to_path_buf(),
    }
}
