//! Central finite-difference checks of reverse-mode gradients.

use super::graph::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            tol: 1e-5,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input, element)` with the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub tol: f64,
    pub passed: bool,
}

impl GradcheckReport {
    fn new(tol: f64) -> Self {
        Self {
            checked: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: None,
            tol,
            passed: true,
        }
    }
}

impl std::fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} entries, max rel err {:.3e} (abs {:.3e}), tol {:.1e}: {}",
            self.checked,
            self.max_rel_error,
            self.max_abs_error,
            self.tol,
            if self.passed { "ok" } else { "FAIL" }
        )
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Compares autodiff gradients of the scalar `f` against central
/// differences at every element of every input.
pub fn gradcheck<F>(f: F, inputs: &[Tensor<f64>], opts: GradcheckOptions) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let entries: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |e| (i, e)))
        .collect();
    gradcheck_entries(f, inputs, &entries, opts)
}

/// Like [`gradcheck`] but only at the listed `(input, element)` entries.
pub fn gradcheck_entries<F>(
    f: F,
    inputs: &[Tensor<f64>],
    entries: &[(usize, usize)],
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut report = GradcheckReport::new(opts.tol);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for &(i, e) in entries {
        let orig = work[i].data()[e];
        work[i].data_mut()[e] = orig + opts.eps;
        let fp = evaluate(&f, &work)?;
        work[i].data_mut()[e] = orig - opts.eps;
        let fm = evaluate(&f, &work)?;
        work[i].data_mut()[e] = orig;
        let numeric = (fp - fm) / (2.0 * opts.eps);
        let a = analytic[i].data()[e];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        if !(rel <= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = Some((i, e));
        }
    }
    report.passed = report.max_rel_error <= opts.tol;
    Ok(report)
}
