//! Central finite-difference gradient verification.

/// Outcome of comparing analytic gradients against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub n_checked: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub passed: bool,
}

/// Compare `analytic` against central differences of `loss_at` around
/// `params`, entry by entry. Relative error uses a floor of 1e-6 in the
/// denominator so near-zero gradient pairs do not divide noise by noise.
pub fn check_gradients(
    loss_at: &impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    tol: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len());
    let mut work = params.to_vec();
    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let up = loss_at(&work);
        work[i] = orig - eps;
        let down = loss_at(&work);
        work[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }
    GradCheckReport {
        n_checked: params.len(),
        max_rel_err,
        worst_index,
        passed: max_rel_err < tol,
    }
}
