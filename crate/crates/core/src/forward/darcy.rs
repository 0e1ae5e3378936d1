//! Steady Darcy flow `−∇·(κ∇p) = f` on a rectangle.
//!
//! Vertex-centered conservative five-point scheme: unknowns live on all grid
//! nodes, boundary nodes own half (or quarter) control volumes, and face
//! transmissibilities use the harmonic mean of the nodal permeabilities.
//! Flux conditions enter through the boundary faces of the control volumes,
//! which is the ghost-node treatment written in flux form.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Domain, Field, Layout};
use crate::linalg::{pcg, BandedCholesky, CsrMatrix};

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Constant source on the horizontal strip `y_lo ≤ x₂ ≤ y_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub y_lo: f64,
    pub y_hi: f64,
    pub value: f64,
}

#[derive(Clone)]
pub enum Source {
    /// Piecewise constant in `x₂`; integrated exactly over control volumes.
    Layers(Vec<Layer>),
    /// Point values at nodes times control-volume area.
    Func(ScalarFn),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Layers(l) => f.debug_tuple("Layers").field(l).finish(),
            Source::Func(_) => f.write_str("Func(..)"),
        }
    }
}

#[derive(Clone)]
pub enum Boundary {
    /// `p = bottom_pressure` on `x₂ = 0`, inward flux `left_influx` through
    /// `x₁ = 0`, no flow through the right and top sides.
    Mixed {
        bottom_pressure: f64,
        left_influx: f64,
    },
    /// `p = g` on the whole boundary.
    Dirichlet(ScalarFn),
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Mixed {
                bottom_pressure,
                left_influx,
            } => f
                .debug_struct("Mixed")
                .field("bottom_pressure", bottom_pressure)
                .field("left_influx", left_influx)
                .finish(),
            Boundary::Dirichlet(_) => f.write_str("Dirichlet(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolver {
    #[default]
    Direct,
    Cg {
        rel_tol: f64,
        max_iter: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DarcyProblem {
    pub domain: Domain,
    pub source: Source,
    pub boundary: Boundary,
    pub solver: LinearSolver,
}

impl DarcyProblem {
    /// The groundwater benchmark: source 0 / 137 / 274 on the strips
    /// `[0,4]`, `[4,5]`, `[5,6]` in `x₂`, `p = 100` at the bottom, inward
    /// flux 500 on the left, no flow elsewhere.
    pub fn benchmark(domain: Domain) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::InvalidDomain("Darcy flow needs a 2D domain".into()));
        }
        Ok(DarcyProblem {
            domain,
            source: Source::Layers(vec![
                Layer {
                    y_lo: 4.0,
                    y_hi: 5.0,
                    value: 137.0,
                },
                Layer {
                    y_lo: 5.0,
                    y_hi: 6.0,
                    value: 274.0,
                },
            ]),
            boundary: Boundary::Mixed {
                bottom_pressure: 100.0,
                left_influx: 500.0,
            },
            solver: LinearSolver::Direct,
        })
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_solver(mut self, solver: LinearSolver) -> Self {
        self.solver = solver;
        self
    }

    fn is_dirichlet(&self, i: usize, j: usize) -> bool {
        let (nx, ny) = (self.domain.n_cells(0), self.domain.n_cells(1));
        match self.boundary {
            Boundary::Mixed { .. } => j == 0,
            Boundary::Dirichlet(_) => i == 0 || j == 0 || i == nx || j == ny,
        }
    }

    fn dirichlet_value(&self, x: [f64; 2]) -> f64 {
        match &self.boundary {
            Boundary::Mixed {
                bottom_pressure, ..
            } => *bottom_pressure,
            Boundary::Dirichlet(g) => g(x),
        }
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Half-open extent `[lo, hi]` of the control volume of node `i` on an axis.
fn cv_range(i: usize, n: usize, h: f64) -> (f64, f64) {
    let x = i as f64 * h;
    let lo = if i == 0 { x } else { x - 0.5 * h };
    let hi = if i == n { x } else { x + 0.5 * h };
    (lo, hi)
}

fn source_integral(source: &Source, x: [f64; 2], xr: (f64, f64), yr: (f64, f64)) -> f64 {
    let width = xr.1 - xr.0;
    match source {
        Source::Layers(layers) => layers
            .iter()
            .map(|l| {
                let overlap = (yr.1.min(l.y_hi) - yr.0.max(l.y_lo)).max(0.0);
                l.value * width * overlap
            })
            .sum(),
        Source::Func(f) => f(x) * width * (yr.1 - yr.0),
    }
}

/// Assembled linear system over the non-Dirichlet nodes.
struct System {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    /// full-grid node → unknown index
    unknown: Vec<Option<usize>>,
}

fn assemble(kappa: &[f64], problem: &DarcyProblem) -> System {
    let d = &problem.domain;
    let (nx, ny) = (d.n_cells(0), d.n_cells(1));
    let (hx, hy) = (d.spacing(0), d.spacing(1));
    let w = nx + 1;
    let node = |i: usize, j: usize| i + w * j;

    let mut unknown = vec![None; w * (ny + 1)];
    let mut count = 0;
    for j in 0..=ny {
        for i in 0..=nx {
            if !problem.is_dirichlet(i, j) {
                unknown[node(i, j)] = Some(count);
                count += 1;
            }
        }
    }

    let mut triplets = Vec::with_capacity(5 * count);
    let mut rhs = vec![0.0; count];
    for j in 0..=ny {
        for i in 0..=nx {
            let Some(row) = unknown[node(i, j)] else {
                continue;
            };
            let xr = cv_range(i, nx, hx);
            let yr = cv_range(j, ny, hy);
            let x = [i as f64 * hx, j as f64 * hy];
            let kp = kappa[node(i, j)];
            // (neighbour i, neighbour j, face length / distance)
            let mut faces: [Option<(usize, usize, f64)>; 4] = [None; 4];
            if i > 0 {
                faces[0] = Some((i - 1, j, (yr.1 - yr.0) / hx));
            }
            if i < nx {
                faces[1] = Some((i + 1, j, (yr.1 - yr.0) / hx));
            }
            if j > 0 {
                faces[2] = Some((i, j - 1, (xr.1 - xr.0) / hy));
            }
            if j < ny {
                faces[3] = Some((i, j + 1, (xr.1 - xr.0) / hy));
            }
            let mut diag = 0.0;
            for (ni, nj, geom) in faces.into_iter().flatten() {
                let t = harmonic(kp, kappa[node(ni, nj)]) * geom;
                diag += t;
                match unknown[node(ni, nj)] {
                    Some(col) => triplets.push((row, col, -t)),
                    None => {
                        rhs[row] += t * problem.dirichlet_value([ni as f64 * hx, nj as f64 * hy])
                    }
                }
            }
            triplets.push((row, row, diag));
            rhs[row] += source_integral(&problem.source, x, xr, yr);
            if let Boundary::Mixed { left_influx, .. } = problem.boundary {
                if i == 0 {
                    rhs[row] += left_influx * (yr.1 - yr.0);
                }
            }
        }
    }
    System {
        matrix: CsrMatrix::from_triplets(count, triplets),
        rhs,
        unknown,
    }
}

/// Solves for the pressure on all grid nodes. `kappa` must be a full-layout
/// field on the problem's grid.
pub fn solve_darcy(kappa: &Field, problem: &DarcyProblem) -> Result<Field> {
    let d = problem.domain;
    if kappa.layout() != Layout::Full || *kappa.domain() != d {
        return Err(Error::DimensionMismatch {
            context: "permeability grid",
            expected: d.len(Layout::Full),
            found: kappa.values().len(),
        });
    }
    if let Some(i) = kappa.values().iter().position(|&k| !(k > 0.0)) {
        return Err(Error::param(
            "kappa",
            format!(
                "permeability {} at node {i} is not positive",
                kappa.values()[i]
            ),
        ));
    }
    let sys = assemble(kappa.values(), problem);
    let sol = match problem.solver {
        LinearSolver::Direct => BandedCholesky::factor(&sys.matrix)?.solve(&sys.rhs),
        LinearSolver::Cg { rel_tol, max_iter } => pcg(&sys.matrix, &sys.rhs, rel_tol, max_iter)?,
    };
    let values = sys
        .unknown
        .iter()
        .enumerate()
        .map(|(k, u)| match u {
            Some(r) => sol[*r],
            None => problem.dirichlet_value(d.coords(Layout::Full, k)),
        })
        .collect();
    Field::new(d, Layout::Full, values)
}

/// Net discrete flux leaving through the Dirichlet nodes, computed from the
/// faces that connect them to unknown nodes.
pub fn dirichlet_outflow(kappa: &Field, p: &Field, problem: &DarcyProblem) -> f64 {
    let d = &problem.domain;
    let (nx, ny) = (d.n_cells(0), d.n_cells(1));
    let (hx, hy) = (d.spacing(0), d.spacing(1));
    let w = nx + 1;
    let (k, pv) = (kappa.values(), p.values());
    let mut total = 0.0;
    for j in 0..=ny {
        for i in 0..=nx {
            if problem.is_dirichlet(i, j) {
                continue;
            }
            let xr = cv_range(i, nx, hx);
            let yr = cv_range(j, ny, hy);
            let a = i + w * j;
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push((a - 1, (yr.1 - yr.0) / hx, problem.is_dirichlet(i - 1, j)));
            }
            if i < nx {
                nb.push((a + 1, (yr.1 - yr.0) / hx, problem.is_dirichlet(i + 1, j)));
            }
            if j > 0 {
                nb.push((a - w, (xr.1 - xr.0) / hy, problem.is_dirichlet(i, j - 1)));
            }
            if j < ny {
                nb.push((a + w, (xr.1 - xr.0) / hy, problem.is_dirichlet(i, j + 1)));
            }
            for (b, geom, dir) in nb {
                if dir {
                    total += harmonic(k[a], k[b]) * geom * (pv[a] - pv[b]);
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dirichlet_problem(n: usize, g: ScalarFn, f: ScalarFn) -> DarcyProblem {
        DarcyProblem::benchmark(Domain::rectangle(6.0, 6.0, n, n).unwrap())
            .unwrap()
            .with_boundary(Boundary::Dirichlet(g))
            .with_source(Source::Func(f))
    }

    #[test]
    fn linear_solution_is_exact() {
        let p = dirichlet_problem(12, Arc::new(|x| x[0] + x[1]), Arc::new(|_| 0.0));
        let kappa = Field::constant(p.domain, Layout::Full, 1.0);
        let sol = solve_darcy(&kappa, &p).unwrap();
        for (k, v) in sol.values().iter().enumerate() {
            let x = p.domain.coords(Layout::Full, k);
            assert!((v - (x[0] + x[1])).abs() < 1e-11);
        }
    }

    fn manufactured_error(n: usize) -> f64 {
        let exact = |x: [f64; 2]| (PI * x[0] / 6.0).sin() * (PI * x[1] / 6.0).sin();
        let p = dirichlet_problem(
            n,
            Arc::new(exact),
            Arc::new(move |x| 2.0 * PI * PI / 36.0 * exact(x)),
        );
        let kappa = Field::constant(p.domain, Layout::Full, 1.0);
        let sol = solve_darcy(&kappa, &p).unwrap();
        sol.l2_distance(&Field::from_fn(p.domain, Layout::Full, exact))
    }

    #[test]
    fn manufactured_second_order() {
        let (e1, e2) = (manufactured_error(16), manufactured_error(32));
        let ratio = e1 / e2;
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn benchmark_conserves_mass() {
        let d = Domain::rectangle(6.0, 6.0, 30, 30).unwrap();
        let p = DarcyProblem::benchmark(d).unwrap();
        let kappa = Field::from_fn(d, Layout::Full, |x| 1.0 + 0.5 * (x[0] * x[1]).sin().abs());
        let sol = solve_darcy(&kappa, &p).unwrap();
        // unknown control volumes cover x2 ∈ [h/2, 6]; source lives above x2 = 4
        let h = d.spacing(1);
        let inflow = 137.0 * 6.0 + 274.0 * 6.0 + 500.0 * (6.0 - 0.5 * h);
        let out = dirichlet_outflow(&kappa, &sol, &p);
        assert!(((out - inflow) / inflow).abs() < 1e-8, "{out} vs {inflow}");
    }

    #[test]
    fn pressure_drop_scales_inversely_with_permeability() {
        let d = Domain::rectangle(6.0, 6.0, 20, 20).unwrap();
        let p = DarcyProblem::benchmark(d)
            .unwrap()
            .with_source(Source::Layers(vec![]));
        let kappa = Field::from_fn(d, Layout::Full, |x| 1.0 + 0.1 * x[0]);
        let a = solve_darcy(&kappa, &p).unwrap();
        let b = solve_darcy(&kappa.map(|k| 3.0 * k), &p).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!(((u - 100.0) / 3.0 - (v - 100.0)).abs() < 1e-8 * (u - 100.0).abs().max(1.0));
        }
    }

    #[test]
    fn cg_matches_direct() {
        let d = Domain::rectangle(6.0, 6.0, 24, 24).unwrap();
        let p = DarcyProblem::benchmark(d).unwrap();
        let kappa = Field::from_fn(d, Layout::Full, |x| (0.3 * x[0] - 0.2 * x[1]).exp());
        let a = solve_darcy(&kappa, &p).unwrap();
        let b = solve_darcy(
            &kappa,
            &p.clone().with_solver(LinearSolver::Cg {
                rel_tol: 1e-13,
                max_iter: 5000,
            }),
        )
        .unwrap();
        assert!(a.l2_distance(&b) < 1e-7 * a.l2_norm());
    }

    #[test]
    fn rejects_bad_permeability() {
        let d = Domain::rectangle(6.0, 6.0, 8, 8).unwrap();
        let p = DarcyProblem::benchmark(d).unwrap();
        let mut v = vec![1.0; d.len(Layout::Full)];
        v[10] = 0.0;
        assert!(solve_darcy(&Field::new(d, Layout::Full, v).unwrap(), &p).is_err());
        assert!(solve_darcy(&Field::constant(d, Layout::Interior, 1.0), &p).is_err());
    }
}
