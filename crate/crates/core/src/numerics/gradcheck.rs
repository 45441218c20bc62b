//! Central finite-difference oracle for analytic gradients.
//!
//! The oracle only evaluates forward values, so it stays independent of the
//! backward rules it checks.

use rand::seq::index::sample;
use rand::Rng;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so entries with negligible gradient are compared
/// absolutely. Central differences at `FD_STEP` carry about 1e-10 of
/// rounding noise on O(10) losses, which this floor keeps below `REL_TOL`.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub probes: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.probes > 0 && self.max_rel_err < REL_TOL
    }

    fn record(&mut self, label: &str, idx: usize, analytic: f64, numeric: f64) {
        self.probes += 1;
        let rel = relative_error(analytic, numeric);
        if rel > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(rel);
            self.worst = Some((label.to_string(), idx, analytic, numeric));
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.probes += other.probes;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn probe_indices<R: Rng + ?Sized>(len: usize, max: usize, rng: &mut R) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, max).into_vec();
        v.sort_unstable();
        v
    }
}

/// Checks `f` w.r.t. free input tensors. `f` builds a scalar from leaves.
pub fn check_inputs<F, R>(
    inputs: &[Tensor<f64>],
    f: F,
    max_probes_per_input: usize,
    rng: &mut R,
) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    R: Rng + ?Sized,
{
    let eval = |ts: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradReport::default();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], input);
        for idx in probe_indices(input.len(), max_probes_per_input, rng) {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= FD_STEP;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
            report.record(&format!("input{k}"), idx, analytic.data()[idx], numeric);
        }
    }
    Ok(report)
}

/// Checks `f` w.r.t. every tensor in a parameter store, probing up to
/// `max_probes_per_tensor` random entries of each.
pub fn check_params<F, R>(
    store: &ParamStore<f64>,
    f: F,
    max_probes_per_tensor: usize,
    rng: &mut R,
) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
    R: Rng + ?Sized,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    let grads = g.backward(out)?;

    let mut report = GradReport::default();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut work = store.clone();
    for name in &names {
        let len = store.get(name).unwrap().len();
        let analytic = grads
            .param(name)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(name).unwrap().dims()));
        for idx in probe_indices(len, max_probes_per_tensor, rng) {
            let orig = store.get(name).unwrap().data()[idx];
            work.get_mut(name).unwrap().data_mut()[idx] = orig + FD_STEP;
            let fp = {
                let mut g = Graph::new();
                let o = f(&mut g, &work)?;
                g.value(o).item()
            };
            work.get_mut(name).unwrap().data_mut()[idx] = orig - FD_STEP;
            let fm = {
                let mut g = Graph::new();
                let o = f(&mut g, &work)?;
                g.value(o).item()
            };
            work.get_mut(name).unwrap().data_mut()[idx] = orig;
            report.record(name, idx, analytic.data()[idx], (fp - fm) / (2.0 * FD_STEP));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_separates_noise_from_errors() {
        // Structurally zero gradient against finite-difference rounding noise.
        assert!(relative_error(1e-16, 1.8e-10) < REL_TOL);
        assert!(relative_error(1.0, 1.0 + 2e-4) > REL_TOL);
        assert!(relative_error(1e-3, 1.2e-3) > REL_TOL);
        assert!(relative_error(0.0, 5e-9) > REL_TOL);
    }
}
