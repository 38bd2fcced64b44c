use alloc::format;
use alloc::vec::Vec;

use super::{NodeRef, Tape, Tensor};
use crate::{Error, Result};

/// Compares backward gradients of `f` against central finite differences.
///
/// `f` receives a fresh tape with one differentiable leaf per entry of `params`
/// (in order) and must return a scalar loss node. The result is the maximum over
/// all coordinates of `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
/// The tape lifetime `'d` is chosen by the caller, so `f` may push borrowed data
/// (trees, inputs) that outlives the check.
pub fn grad_check<'d, F>(f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'d>, &[NodeRef]) -> Result<NodeRef>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::usage(format!("finite-difference step must be positive, got {step}")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let refs: Vec<NodeRef> = ps.iter().map(|p| tape.variable(p.clone())).collect();
        let loss = f(&mut tape, &refs)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluated to {v}")));
        }
        Ok(v)
    };

    let analytic: Vec<Tensor> = {
        let mut tape = Tape::new();
        let refs: Vec<NodeRef> = params.iter().map(|p| tape.variable(p.clone())).collect();
        let loss = f(&mut tape, &refs)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluated to {v}")));
        }
        let grads = tape.backward(loss)?;
        refs.iter()
            .zip(params)
            .map(|(r, p)| grads.wrt(*r, p.shape()))
            .collect()
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (k, a) in analytic.iter().enumerate() {
        for i in 0..a.len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let an = a.data()[i];
            let rel = (an - numeric).abs() / f64::max(1e-8, an.abs() + numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn squared_norm_is_nearly_exact() {
        let p = vec![
            Tensor::vector(vec![0.3, -1.2, 2.5]),
            Tensor::matrix(2, 2, vec![1.0, -0.5, 0.25, 4.0]).unwrap(),
        ];
        let err = grad_check(
            |t, refs| {
                let mut terms = Vec::new();
                for &r in refs {
                    let sq = t.mul(r, r)?;
                    terms.push(t.sum(sq));
                }
                Ok(t.add_all(&terms)?.unwrap())
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let p = vec![Tensor::scalar(1.0)];
        assert!(matches!(grad_check(|_, r| Ok(r[0]), &p, 0.0), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let p = vec![Tensor::scalar(f64::INFINITY)];
        assert!(matches!(
            grad_check(|t, r| Ok(t.sum(r[0])), &p, 1e-5),
            Err(Error::NonFinite(_))
        ));
    }
}
