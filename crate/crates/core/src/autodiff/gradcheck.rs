use super::params::{ParamId, ParamStore};

/// Outcome of comparing analytic parameter gradients against central
/// differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    pub worst_rel: f64,
    /// `(parameter, element, analytic, numeric)` for failing entries.
    pub failures: Vec<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        self.passed as f64 / self.checked as f64
    }
}

/// Relative error `|a - n| / max(|a|, |n|)`; entries where both magnitudes are
/// below `abs_floor` count as agreeing.
pub fn relative_error(a: f64, n: f64, abs_floor: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < abs_floor {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Compares `analytic` with central differences `(f(p+h) - f(p-h)) / 2h`
/// for every element of the selected parameters.
pub fn check_gradients(
    params: &ParamStore<f64>,
    analytic: &ParamStore<f64>,
    ids: &[ParamId],
    step: f64,
    rel_tol: f64,
    abs_floor: f64,
    mut loss: impl FnMut(&ParamStore<f64>) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        checked: 0,
        passed: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    let mut probe = params.clone();
    for &id in ids {
        for e in 0..params.get(id).data().len() {
            let orig = params.get(id).data()[e];
            probe.get_mut(id).data_mut()[e] = orig + step;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[e] = orig - step;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(id).data()[e];
            let rel = relative_error(a, numeric, abs_floor);
            report.checked += 1;
            report.worst_rel = report.worst_rel.max(rel);
            if rel < rel_tol {
                report.passed += 1;
            } else {
                report.failures.push((params.name(id).to_string(), e, a, numeric));
            }
        }
    }
    report
}
