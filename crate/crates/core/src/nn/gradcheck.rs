use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares backward-pass gradients against central differences.
///
/// `loss` must build the same scalar loss each time it is called (any
/// randomness, such as a dropout mask, has to be re-seeded inside it). At most
/// `per_param` coordinates of each parameter are sampled. The relative error of
/// a coordinate is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps coordinates
/// whose true gradient is zero from dividing roundoff by roundoff.
pub fn gradient_check<F>(store: &mut ParamStore<f64>, loss: F, per_param: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = loss(&mut g, store)?;
    g.backward(l)?;
    let mut analytic = ParamStore::<f64>::new();
    std::mem::swap(&mut analytic, store);
    for p in analytic.iter_mut() {
        p.tensor.clear_grad();
    }
    g.accumulate_param_grads(&mut analytic)?;
    std::mem::swap(&mut analytic, store);

    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(&mut g, store)?;
        Ok(g.scalar_value(l))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let grads: Vec<f64> = match store.get(id).grad() {
            Some(g) => g.to_vec(),
            None => vec![0.0; n],
        };
        let picks: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, per_param).into_vec();
            v.sort_unstable();
            v
        };
        for i in picks {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + FD_STEP;
            let up = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig - FD_STEP;
            let down = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = grads[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
