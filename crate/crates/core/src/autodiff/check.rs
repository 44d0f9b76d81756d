use super::{AutodiffError, Graph, Tensor, Value};

/// Outcome of comparing tape gradients against central finite differences.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Denominator floor for relative errors on near-zero gradients.
const REL_FLOOR: f64 = 1e-6;

/// Builds `f` on fresh tapes and compares the analytic gradient of its scalar
/// output with central differences of step `eps`, element by element.
pub fn check_gradients<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheck, AutodiffError>
where
    F: Fn(&mut Graph, &[Value]) -> Result<Value, AutodiffError>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let vals = tensors
            .iter()
            .map(|t| g.leaf(t.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = f(&mut g, &vals)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vals = inputs
        .iter()
        .map(|t| g.leaf(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut g, &vals)?;
    g.backward(out)?;

    let mut report = GradCheck::default();
    let mut work = inputs.to_vec();
    for (k, v) in vals.iter().enumerate() {
        let analytic = g.grad(*v).clone();
        for i in 0..work[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
