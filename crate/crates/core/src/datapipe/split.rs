use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::window::Dataset;
use crate::{Error, Result};

/// Flight ids on each side of a train/test split, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlightSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// False when some class had too few flights and a global split was used.
    pub stratified: bool,
}

/// Splits `(flight id, class)` pairs so that `round(fraction * N)` flights train.
///
/// Each class first receives `floor(fraction * n_class)` training flights; the
/// remaining slots go to the classes with the largest fractional parts, ties
/// broken by a seeded shuffle.
pub fn split_flights(flights: &[(usize, u8)], fraction: f64, seed: u64) -> Result<FlightSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (fraction * flights.len() as f64).round() as usize;

    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for &(id, class) in flights {
        by_class.entry(class).or_default().push(id);
    }
    for ids in by_class.values_mut() {
        ids.sort_unstable();
        ids.dedup();
    }

    let (mut train, stratified) = if by_class.values().any(|ids| ids.len() < 2) {
        log::warn!("a class has fewer than 2 flights; falling back to an unstratified split");
        let mut ids: Vec<usize> = by_class.into_values().flatten().collect();
        ids.shuffle(&mut rng);
        ids.truncate(target);
        (ids, false)
    } else {
        let mut quotas: Vec<(u8, usize, f64, u64)> = by_class
            .iter()
            .map(|(&class, ids)| {
                let share = fraction * ids.len() as f64;
                (class, share.floor() as usize, share - share.floor(), rng.random())
            })
            .collect();
        let extra = target.saturating_sub(quotas.iter().map(|q| q.1).sum());
        quotas.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.3.cmp(&b.3)));
        for q in quotas.iter_mut().take(extra) {
            q.1 += 1;
        }
        quotas.sort_by_key(|q| q.0);
        let mut train = Vec::with_capacity(target);
        for (class, quota, _, _) in quotas {
            let mut ids = by_class[&class].clone();
            ids.shuffle(&mut rng);
            train.extend_from_slice(&ids[..quota.min(ids.len())]);
        }
        (train, true)
    };
    train.sort_unstable();
    let chosen: BTreeSet<usize> = train.iter().copied().collect();
    let mut test: Vec<usize> = flights.iter().map(|f| f.0).filter(|id| !chosen.contains(id)).collect();
    test.sort_unstable();
    test.dedup();
    Ok(FlightSplit { train, test, stratified })
}

/// Flight-level split of a window dataset; no flight contributes to both sides.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let flights: BTreeSet<(usize, u8)> = dataset.windows.iter().map(|w| (w.flight, w.flight_class)).collect();
    let flights: Vec<_> = flights.into_iter().collect();
    let s = split_flights(&flights, fraction, seed)?;
    let train: BTreeSet<usize> = s.train.into_iter().collect();
    Ok((
        dataset.filter(|w| train.contains(&w.flight)),
        dataset.filter(|w| !train.contains(&w.flight)),
    ))
}
