//! Central finite-difference check of tape gradients.

use crate::params::{Grads, ParamSet};
use crate::tape::{Tape, Var};

/// Worst disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|numeric - analytic| / max(|numeric|, |analytic|, 1e-5)`.
    pub max_relative_error: f64,
    /// Parameter entry where it occurred, with both values.
    pub location: String,
    pub entries: usize,
}

/// Compare the backward pass of the scalar built by `f` against central
/// differences with step `h` over every scalar parameter. Parameters are
/// restored before returning.
pub fn check_gradients<F>(params: &mut ParamSet, h: f64, f: F) -> GradCheck
where
    F: Fn(&mut Tape) -> Var,
{
    let mut grads = Grads::new(params);
    {
        let mut tape = Tape::new(params);
        let out = f(&mut tape);
        tape.backward(out, &mut grads);
    }
    let eval = |p: &ParamSet| {
        let mut t = Tape::new(p);
        let o = f(&mut t);
        t.scalar(o)
    };
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        location: String::new(),
        entries: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for k in 0..params.get(id).data.len() {
            let orig = params.get(id).data[k];
            params.get_mut(id).data[k] = orig + h;
            let plus = eval(params);
            params.get_mut(id).data[k] = orig - h;
            let minus = eval(params);
            params.get_mut(id).data[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g[k]);
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-5);
            worst.entries += 1;
            if err > worst.max_relative_error {
                worst.max_relative_error = err;
                worst.location = format!(
                    "{}[{k}]: analytic {analytic:e}, numeric {numeric:e}",
                    params.name(id)
                );
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Group, Tensor};

    #[test]
    fn quadratic_passes() {
        let mut params = ParamSet::new();
        let id = params.add(
            "x",
            Group::Rest,
            Tensor {
                rows: 3,
                cols: 1,
                data: vec![0.5, -1.0, 2.0],
            },
        );
        let probe = vec![1.0, 2.0, -0.5];
        let check = check_gradients(&mut params, 1e-6, |tape| {
            let x = tape.param(id);
            let sq = tape.mul(x, x);
            let p = tape.input(probe.clone());
            tape.dot(sq, p)
        });
        assert!(check.max_relative_error < 1e-6, "{check:?}");
        assert_eq!(check.entries, 3);
        assert_eq!(params.get(id).data, vec![0.5, -1.0, 2.0]);
    }
}
