use super::graph::GrlMode;
use super::{DiffError, Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over coordinates of `|a − n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    /// `(parameter, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub n_coords: usize,
}

/// Compares reverse-mode gradients against central finite differences
/// (the fourth-order five-point stencil, so truncation error is `O(h⁴)`).
///
/// `f` builds a scalar from leaves bound to `params` (in order) on a fresh
/// evaluation-mode graph, so dropout is off. It is called `4·n + 1` times for
/// `n` coordinates and must be deterministic.
///
/// Gradient-reversal nodes are part of the checked gradient: during the
/// numeric evaluations each one is linearized around its input at the
/// unperturbed point, so the differences see its defined Jacobian `−λ·I`
/// while every other operator is differenced through its true forward.
pub fn check_gradients<F>(params: &[Tensor], f: F, h: f64) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, DiffError>,
{
    let mut g = Graph::new();
    g.set_grl_mode(GrlMode::Record(Vec::new()));
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let refs = match g.take_grl_mode() {
        GrlMode::Record(r) => r,
        _ => unreachable!("mode set above"),
    };
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        .collect();
    drop(g);

    let eval = |ps: &[Tensor]| -> Result<f64, DiffError> {
        let mut g = Graph::new();
        g.set_grl_mode(GrlMode::Linearize(refs.clone(), 0));
        let vars: Vec<Var> = ps.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, n_coords: 0 };
    for (pi, a_grad) in analytic.iter().enumerate() {
        for c in 0..params[pi].len() {
            let a = a_grad.data()[c];
            if !a.is_finite() {
                return Err(DiffError::NonFinite { what: "analytic gradient", param: pi, coord: c });
            }
            let x = params[pi].data()[c];
            let mut at = |step: f64| {
                work[pi].data_mut()[c] = x + step;
                eval(&work)
            };
            let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
            work[pi].data_mut()[c] = x;
            let n = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            if !n.is_finite() {
                return Err(DiffError::NonFinite { what: "numeric gradient", param: pi, coord: c });
            }
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            report.n_coords += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, c));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form() {
        // x^T A x with a non-symmetric A.
        let a = Tensor::from_vec(3, 3, vec![2.0, 0.5, -1.0, 0.0, 3.0, 0.25, 1.5, -0.5, 1.0]);
        let x = Tensor::from_vec(3, 1, vec![0.7, -1.3, 0.4]);
        let r = check_gradients(
            &[x],
            |g, v| {
                let am = g.constant(a.clone());
                let ax = g.matmul(am, v[0])?;
                let prod = g.mul(v[0], ax)?;
                Ok(g.sum(prod))
            },
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn grl_is_part_of_the_checked_gradient() {
        let r = check_gradients(
            &[Tensor::row_vector(vec![0.3, -0.8])],
            |g, v| {
                let t = g.tanh(v[0]);
                let r = g.grl(t, 1.0);
                let sq = g.mul(r, r)?;
                Ok(g.sum(sq))
            },
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn non_finite_is_reported_with_coordinate() {
        let e = check_gradients(
            &[Tensor::row_vector(vec![1.0, 2.0])],
            |g, v| {
                let s = g.scale(v[0], f64::INFINITY);
                Ok(g.sum(s))
            },
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(e, DiffError::NonFinite { param: 0, .. }), "{e}");
    }
}
