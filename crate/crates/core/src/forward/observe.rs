//! Linear observation functionals and the noisy data model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Field, Layout};
use crate::rng::stream;

/// A linear functional on full-layout fields, stored as sparse weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    center: [f64; 2],
    weights: Vec<(usize, f64)>,
}

impl Functional {
    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().map(|&(i, w)| w * values[i]).sum()
    }
}

fn check_inside(domain: &Domain, c: [f64; 2]) -> Result<()> {
    for a in 0..domain.dim() {
        if !(c[a] >= 0.0 && c[a] <= domain.extent(a)) {
            return Err(Error::param(
                "observation center",
                format!("{c:?} lies outside the domain"),
            ));
        }
    }
    Ok(())
}

/// Gaussian-mollified point observations with width `sigma`, truncated at
/// `6σ` and renormalized to unit discrete mass under trapezoid quadrature.
pub fn mollified_functionals(
    domain: &Domain,
    centers: &[[f64; 2]],
    sigma: f64,
) -> Result<Vec<Functional>> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "mollifier width must be positive"));
    }
    let q = Field::quadrature_weights(domain, Layout::Full);
    let cut2 = (6.0 * sigma).powi(2);
    centers
        .iter()
        .map(|&c| {
            check_inside(domain, c)?;
            let mut weights = Vec::new();
            for (k, qk) in q.iter().enumerate() {
                let x = domain.coords(Layout::Full, k);
                let r2: f64 = (0..domain.dim()).map(|a| (x[a] - c[a]).powi(2)).sum();
                if r2 <= cut2 {
                    weights.push((k, qk * (-0.5 * r2 / (sigma * sigma)).exp()));
                }
            }
            let mass: f64 = weights.iter().map(|w| w.1).sum();
            if !(mass > 0.0) {
                return Err(Error::param("sigma", "mollifier covers no grid node"));
            }
            weights.iter_mut().for_each(|w| w.1 /= mass);
            Ok(Functional { center: c, weights })
        })
        .collect()
}

/// Cell centers of a uniform `m`-per-axis partition of the domain.
pub fn lattice_centers(domain: &Domain, m: usize) -> Vec<[f64; 2]> {
    let axis = |a: usize| -> Vec<f64> {
        if a < domain.dim() {
            (0..m)
                .map(|k| (k as f64 + 0.5) * domain.extent(a) / m as f64)
                .collect()
        } else {
            vec![0.0]
        }
    };
    let (xs, ys) = (axis(0), axis(1));
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
        .collect()
}

/// `n` interior points of a 1D domain with equal spacing `L / (n + 1)`.
pub fn equally_spaced_points(domain: &Domain, n: usize) -> Vec<[f64; 2]> {
    let l = domain.extent(0);
    (1..=n)
        .map(|k| [k as f64 * l / (n + 1) as f64, 0.0])
        .collect()
}

/// Point evaluations by (bi)linear interpolation of nodal values.
pub fn point_functionals(domain: &Domain, points: &[[f64; 2]]) -> Result<Vec<Functional>> {
    let nf = domain.nodes_per_axis(Layout::Full);
    points
        .iter()
        .map(|&c| {
            check_inside(domain, c)?;
            let mut per_axis = [[(0usize, 1.0f64), (0, 0.0)]; 2];
            for (a, slot) in per_axis.iter_mut().enumerate().take(domain.dim()) {
                let h = domain.spacing(a);
                let s = c[a] / h;
                let i = (s.floor() as usize).min(domain.n_cells(a) - 1);
                let t = s - i as f64;
                *slot = [(i, 1.0 - t), (i + 1, t)];
            }
            let mut weights = Vec::with_capacity(4);
            for &(j, wy) in &per_axis[1] {
                for &(i, wx) in &per_axis[0] {
                    let w = wx * wy;
                    if w != 0.0 {
                        weights.push((i + nf[0] * j, w));
                    }
                }
            }
            Ok(Functional { center: c, weights })
        })
        .collect()
}

pub fn observe(p: &Field, functionals: &[Functional]) -> Vec<f64> {
    debug_assert_eq!(p.layout(), Layout::Full);
    functionals.iter().map(|f| f.apply(p.values())).collect()
}

/// How the scalar noise magnitude in the stopping rule is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLevel {
    /// `‖Γ^{-1/2} η‖` of the realized draw.
    #[default]
    Realized,
    /// `√dim(y)`, the expected whitened norm.
    Expected,
}

/// Data, noise covariance and the derived whitening factor.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub functionals: Vec<Functional>,
    pub y: Vec<f64>,
    gamma: DMatrix<f64>,
    chol: DMatrix<f64>,
    pub noise_level: f64,
}

impl ObservationModel {
    pub fn new(
        functionals: Vec<Functional>,
        y: Vec<f64>,
        gamma: DMatrix<f64>,
        noise_level: f64,
    ) -> Result<Self> {
        let m = y.len();
        if gamma.nrows() != m || gamma.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "noise covariance",
                expected: m,
                found: gamma.nrows(),
            });
        }
        if (&gamma - gamma.transpose()).amax() > 1e-12 * gamma.amax() {
            return Err(Error::param("gamma", "noise covariance is not symmetric"));
        }
        let chol = gamma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("noise covariance".into()))?
            .l();
        Ok(ObservationModel {
            functionals,
            y,
            gamma,
            chol,
            noise_level,
        })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// Lower Cholesky factor `L` with `Γ = L Lᵀ`.
    pub fn gamma_sqrt(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `Γ^{-1/2} r` via the Cholesky factor.
    pub fn whiten(&self, r: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(r);
        self.chol
            .solve_lower_triangular(&v)
            .expect("Cholesky factor has a positive diagonal")
            .as_slice()
            .to_vec()
    }

    /// `‖Γ^{-1/2}(y − w)‖`.
    pub fn misfit(&self, w: &[f64]) -> f64 {
        let r: Vec<f64> = self.y.iter().zip(w).map(|(a, b)| a - b).collect();
        self.whiten(&r).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `y = clean + η`, `η = L z`, `z ~ N(0, I)` from the seeded stream. With
/// `noise` off the data are exact and the recorded noise level is zero.
pub fn synthesize_data(
    clean: Vec<f64>,
    functionals: Vec<Functional>,
    gamma: DMatrix<f64>,
    seed: u64,
    noise: Option<NoiseLevel>,
) -> Result<ObservationModel> {
    let m = clean.len();
    let mut model = ObservationModel::new(functionals, clean, gamma, 0.0)?;
    let Some(level) = noise else {
        return Ok(model);
    };
    let mut rng = stream(seed, "observation-noise", &[]);
    let z = crate::grid::standard_normals(m, &mut rng);
    let eta = &model.chol * DVector::from_column_slice(&z);
    for (y, e) in model.y.iter_mut().zip(eta.iter()) {
        *y += e;
    }
    model.noise_level = match level {
        NoiseLevel::Realized => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NoiseLevel::Expected => (m as f64).sqrt(),
    };
    Ok(model)
}
