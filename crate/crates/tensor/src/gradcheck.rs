//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Lower bound on the relative-error denominator, so that near-zero
    /// gradients are compared in absolute terms.
    pub floor: f64,
    /// Coordinates probed per input; `None` probes all of them.
    pub coords_per_input: Option<usize>,
    /// For piecewise-smooth functions: a coordinate whose relative error
    /// exceeds this at `step` is probed once more at `step / 10` and the
    /// smaller error kept. A kink closer than `step` to the point spoils
    /// only the coarse probe.
    pub refine_above: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            coords_per_input: None,
            refine_above: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates that needed the finer probe.
    pub refined: usize,
}

impl GradCheck {
    /// Compares the tape's adjoints of `f` against central differences.
    ///
    /// `f` receives the inputs bound as trainable leaves and must return a
    /// scalar.
    pub fn run<R, F>(&self, inputs: &[Tensor], f: F, rng: &mut R) -> Result<GradCheckReport>
    where
        R: Rng + ?Sized,
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
    {
        let analytic: Vec<Tensor> = {
            let tape = Tape::new();
            let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
            let loss = f(&tape, &vars)?;
            let grads = tape.backward(loss)?;
            vars.iter().map(|v| grads.get_or_zeros(*v)).collect()
        };

        let eval = |probe: &[Tensor]| -> Result<f64> {
            let tape = Tape::new();
            let vars: Vec<_> = probe.iter().map(|t| tape.constant(t.clone())).collect();
            let out = f(&tape, &vars)?;
            let v = out.value().item();
            Ok(v)
        };

        let mut probe = inputs.to_vec();
        let mut max_rel = 0.0f64;
        let mut checked = 0;
        let mut refined = 0;
        for (i, input) in inputs.iter().enumerate() {
            let n = input.numel();
            let coords: Vec<usize> = match self.coords_per_input {
                Some(k) if k < n => sample(rng, n, k).into_vec(),
                _ => (0..n).collect(),
            };
            for c in coords {
                let orig = input.data()[c];
                let a = analytic[i].data()[c];
                let mut probe_at = |h: f64| -> Result<f64> {
                    probe[i].data_mut()[c] = orig + h;
                    let plus = eval(&probe)?;
                    probe[i].data_mut()[c] = orig - h;
                    let minus = eval(&probe)?;
                    probe[i].data_mut()[c] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    Ok((a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor))
                };
                let mut rel = probe_at(self.step)?;
                if self.refine_above.is_some_and(|l| rel > l) {
                    rel = rel.min(probe_at(self.step / 10.0)?);
                    refined += 1;
                }
                max_rel = max_rel.max(rel);
                checked += 1;
            }
        }
        Ok(GradCheckReport {
            max_rel_err: max_rel,
            checked,
            refined,
        })
    }
}
