//! Central finite-difference oracle for analytic gradients.

use serde::Serialize;

use super::ParamGroups;

#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst entry within the group.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| !g.passed)
            .map(|g| g.name.as_str())
            .collect()
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare `analytic` against `(f(θ+h) − f(θ−h)) / 2h` entry by entry.
///
/// `loss` is evaluated at perturbed copies of `params`; `params` itself is
/// left untouched.
pub fn finite_difference_check<P, F>(
    mut loss: F,
    params: &P,
    analytic: &P,
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    P: ParamGroups + Clone,
    F: FnMut(&P) -> f64,
{
    let names = params.group_names();
    let grads = analytic.group_tensors();
    let mut probe = params.clone();
    let mut groups = Vec::with_capacity(names.len());
    for (g, name) in names.iter().enumerate() {
        let len = grads[g].len();
        let mut worst = GroupCheck {
            name: name.clone(),
            entries: len,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            passed: true,
        };
        for i in 0..len {
            let orig = probe.group_tensors()[g].data()[i];
            probe.group_tensors_mut()[g].data_mut()[i] = orig + step;
            let plus = loss(&probe);
            probe.group_tensors_mut()[g].data_mut()[i] = orig - step;
            let minus = loss(&probe);
            probe.group_tensors_mut()[g].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = grads[g].data()[i];
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || !err.is_finite() {
                worst.max_rel_error = err;
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        worst.passed = worst.max_rel_error <= tolerance;
        groups.push(worst);
    }
    GradCheckReport {
        step,
        tolerance,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[derive(Clone)]
    struct Flat(Vec<Tensor>);

    impl ParamGroups for Flat {
        fn group_names(&self) -> Vec<String> {
            (0..self.0.len()).map(|i| format!("group{i}")).collect()
        }
        fn group_tensors(&self) -> Vec<&Tensor> {
            self.0.iter().collect()
        }
        fn group_tensors_mut(&mut self) -> Vec<&mut Tensor> {
            self.0.iter_mut().collect()
        }
    }

    fn half_sq_norm(p: &Flat) -> f64 {
        p.0.iter().map(|t| t.sum_squares()).sum::<f64>() / 2.0
    }

    #[test]
    fn quadratic_gradient_matches() {
        let p = Flat(vec![
            Tensor::vector(vec![0.5, -2.0, 3.0]),
            Tensor::matrix(2, 2, vec![1.0, -1.0, 0.25, 4.0]),
        ]);
        let report = finite_difference_check(half_sq_norm, &p, &p.clone(), 1e-5, 1e-8);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let p = Flat(vec![
            Tensor::vector(vec![0.5, -2.0]),
            Tensor::vector(vec![1.0]),
        ]);
        let mut bad = p.clone();
        bad.0[1].data_mut()[0] += 1.0;
        let report = finite_difference_check(half_sq_norm, &p, &bad, 1e-5, 1e-4);
        assert!(!report.passed());
        assert_eq!(report.failing(), vec!["group1"]);
    }
}
