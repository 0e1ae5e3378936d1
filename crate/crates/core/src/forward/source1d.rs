//! The source problem `p'' + p = u` on `[0, L]` with `p = 0` at both ends.

use nalgebra::DMatrix;

use super::observe::Functional;
use crate::error::{Error, Result};
use crate::grid::{Domain, Field, Layout};
use crate::linalg::Tridiagonal;

/// Second-difference discretization on the interior nodes. The operator is
/// indefinite, so the factorization pivots.
#[derive(Debug, Clone)]
pub struct SourceProblem1D {
    domain: Domain,
    lu: Tridiagonal,
}

impl SourceProblem1D {
    pub fn new(domain: Domain) -> Result<Self> {
        if domain.dim() != 1 {
            return Err(Error::InvalidDomain(
                "source problem needs a 1D domain".into(),
            ));
        }
        let n = domain.len(Layout::Interior);
        let h = domain.spacing(0);
        let off = vec![1.0 / (h * h); n - 1];
        let diag = vec![1.0 - 2.0 / (h * h); n];
        let lu = Tridiagonal::factor(&off, &diag, &off)?;
        Ok(SourceProblem1D { domain, lu })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Solve for interior values.
    pub fn solve_interior(&self, u: &[f64]) -> Vec<f64> {
        self.lu.solve(u)
    }

    /// Matrix `R` with `R u = observe(solve(u))` for interior sources `u`.
    /// The operator is symmetric, so each row is one solve with the
    /// functional's interior weights.
    pub fn response_matrix(&self, functionals: &[Functional]) -> DMatrix<f64> {
        let n = self.domain.len(Layout::Interior);
        let mut r = DMatrix::zeros(functionals.len(), n);
        for (k, f) in functionals.iter().enumerate() {
            let mut w = vec![0.0; n];
            for &(idx, wt) in f.weights() {
                // full index idx ↔ interior idx - 1; boundary values are zero
                if idx >= 1 && idx <= n {
                    w[idx - 1] += wt;
                }
            }
            for (j, v) in self.lu.solve(&w).into_iter().enumerate() {
                r[(k, j)] = v;
            }
        }
        r
    }
}

/// Pressure on all nodes (zero at the ends) for an interior source field.
pub fn solve_source_1d(u: &Field, problem: &SourceProblem1D) -> Result<Field> {
    if u.layout() != Layout::Interior || *u.domain() != problem.domain {
        return Err(Error::DimensionMismatch {
            context: "source grid",
            expected: problem.domain.len(Layout::Interior),
            found: u.values().len(),
        });
    }
    let p = problem.solve_interior(u.values());
    Field::new(problem.domain, Layout::Interior, p).map(|f| f.to_full(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::observe::{equally_spaced_points, observe, point_functionals};
    use std::f64::consts::PI;

    fn error(n: usize) -> f64 {
        let d = Domain::interval(10.0, n).unwrap();
        let prob = SourceProblem1D::new(d).unwrap();
        let u = Field::from_fn(d, Layout::Interior, |x| {
            (1.0 - PI * PI / 100.0) * (PI * x[0] / 10.0).sin()
        });
        let p = solve_source_1d(&u, &prob).unwrap();
        p.l2_distance(&Field::from_fn(d, Layout::Full, |x| {
            (PI * x[0] / 10.0).sin()
        }))
    }

    #[test]
    fn manufactured_second_order() {
        let ratio = error(100) / error(200);
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
        assert!(error(1000) < 1e-4);
    }

    #[test]
    fn zero_source_and_linearity() {
        let d = Domain::interval(10.0, 200).unwrap();
        let prob = SourceProblem1D::new(d).unwrap();
        let z = solve_source_1d(&Field::zeros(d, Layout::Interior), &prob).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let u1 = Field::from_fn(d, Layout::Interior, |x| (x[0] - 3.0).abs());
        let u2 = Field::from_fn(d, Layout::Interior, |x| (2.0 * x[0]).cos());
        let sum = Field::new(
            d,
            Layout::Interior,
            u1.values()
                .iter()
                .zip(u2.values())
                .map(|(a, b)| a + b)
                .collect(),
        )
        .unwrap();
        let (a, b) = (
            solve_source_1d(&u1, &prob).unwrap(),
            solve_source_1d(&u2, &prob).unwrap(),
        );
        let s = solve_source_1d(&sum, &prob).unwrap();
        for k in 0..s.values().len() {
            assert!((s.values()[k] - a.values()[k] - b.values()[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn response_matrix_matches_solve_then_observe() {
        let d = Domain::interval(10.0, 300).unwrap();
        let prob = SourceProblem1D::new(d).unwrap();
        let obs = point_functionals(&d, &equally_spaced_points(&d, 50)).unwrap();
        let r = prob.response_matrix(&obs);
        let u = Field::from_fn(d, Layout::Interior, |x| (x[0] * 1.3).sin() + 0.2 * x[0]);
        let direct = observe(&solve_source_1d(&u, &prob).unwrap(), &obs);
        let via = &r * nalgebra::DVector::from_column_slice(u.values());
        for (a, b) in direct.iter().zip(via.iter()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
