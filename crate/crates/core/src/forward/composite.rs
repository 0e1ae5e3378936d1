//! The composite forward map `G = O ∘ G_pde ∘ F` acting on packed latent
//! vectors, for every supported parameterization.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::darcy::{solve_darcy, DarcyProblem};
use super::observe::{observe, Functional};
use super::source1d::SourceProblem1D;
use super::ForwardMap;
use crate::error::{Error, Result};
use crate::grid::{standard_normals, Domain, Field, Layout};
use crate::param_maps::{
    channel_map, exp_map, level_set_map, ChannelGeometry, ChannelSpec, LevelSetSpec,
    NoncenteredTransform,
};
use crate::priors::UniformBijection;

/// How one unknown field is represented in the latent vector.
#[derive(Debug, Clone)]
pub enum FieldParam {
    /// Latent block = grid values of `u`; the prior has fixed
    /// hyperparameters `theta` and is used only for sampling.
    Plain {
        sampler: NoncenteredTransform,
        theta: Vec<f64>,
    },
    /// Latent block = `[u ; θ_raw]`; `θ` enters only through the prior.
    Centered(NoncenteredTransform),
    /// Latent block = `[ξ ; θ_raw]` with `u = T(ξ, θ)`.
    Noncentered(NoncenteredTransform),
}

impl FieldParam {
    fn transform(&self) -> &NoncenteredTransform {
        match self {
            FieldParam::Plain { sampler, .. } => sampler,
            FieldParam::Centered(t) | FieldParam::Noncentered(t) => t,
        }
    }

    pub fn len(&self) -> usize {
        let t = self.transform();
        match self {
            FieldParam::Plain { .. } => t.xi_len(),
            _ => t.xi_len() + t.hyper_len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Constant prior mean, used as the boundary value of `u`.
    pub fn mean(&self) -> f64 {
        self.transform().mean()
    }

    fn domain(&self) -> Domain {
        *self.transform().basis().domain()
    }

    /// Named slices of the block, offset by `base`.
    pub fn blocks(&self, base: usize, prefix: &str) -> Vec<(String, Range<usize>)> {
        let n = self.transform().xi_len();
        match self {
            FieldParam::Plain { .. } => vec![(format!("{prefix}u"), base..base + n)],
            FieldParam::Centered(t) => vec![
                (format!("{prefix}u"), base..base + n),
                (format!("{prefix}theta"), base + n..base + n + t.hyper_len()),
            ],
            FieldParam::Noncentered(t) => vec![
                (format!("{prefix}xi"), base..base + n),
                (format!("{prefix}theta"), base + n..base + n + t.hyper_len()),
            ],
        }
    }

    fn hyper_raw<'a>(&self, block: &'a [f64]) -> Option<&'a [f64]> {
        match self {
            FieldParam::Plain { .. } => None,
            _ => Some(&block[self.transform().xi_len()..]),
        }
    }

    /// Interior-layout field `u` encoded by `block`.
    pub fn field(&self, block: &[f64]) -> Result<Field> {
        let t = self.transform();
        let n = t.xi_len();
        match self {
            FieldParam::Plain { .. } | FieldParam::Centered(_) => {
                Field::new(self.domain(), Layout::Interior, block[..n].to_vec())
            }
            FieldParam::Noncentered(_) => t.apply(&block[..n], &block[n..]),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let t = self.transform();
        let (xi, theta) = t.sample_latent(rng)?;
        Ok(match self {
            FieldParam::Plain { theta: fixed, .. } => t.apply(&xi, fixed)?.into_values(),
            FieldParam::Centered(_) => {
                let mut u = t.apply(&xi, &theta)?.into_values();
                u.extend_from_slice(&theta);
                u
            }
            FieldParam::Noncentered(_) => {
                let mut v = xi;
                v.extend_from_slice(&theta);
                v
            }
        })
    }

    pub fn hyper_names(&self, suffix: &str) -> Vec<String> {
        let t = self.transform();
        match self {
            FieldParam::Plain { .. } => vec![],
            _ if t.scalar_hypers(&[0.0, 0.0]).is_some() && t.hyper_len() == 2 => {
                vec![format!("alpha{suffix}"), format!("tau{suffix}")]
            }
            _ => vec![format!("ell_mean{suffix}")],
        }
    }

    /// Decoded hyperparameters: `(α, τ)` or the spatial mean of `ℓ`.
    pub fn hypers(&self, block: &[f64]) -> Result<Vec<f64>> {
        let t = self.transform();
        let Some(raw) = self.hyper_raw(block) else {
            return Ok(vec![]);
        };
        if let Some((a, tau)) = t.scalar_hypers(raw) {
            return Ok(vec![a, tau]);
        }
        let ell = t.length_scale(raw)?.expect("field-valued prior");
        let v = ell.values();
        Ok(vec![v.iter().sum::<f64>() / v.len() as f64])
    }

    pub fn length_scale(&self, block: &[f64]) -> Result<Option<Field>> {
        match self.hyper_raw(block) {
            Some(raw) => self.transform().length_scale(raw),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Parameterization {
    Single(FieldParam),
    /// Latent = `[d_raw (5) ; outside block ; inside block]`.
    Channel {
        geometry: [UniformBijection; 5],
        outside: FieldParam,
        inside: FieldParam,
    },
}

impl Parameterization {
    pub fn len(&self) -> usize {
        match self {
            Parameterization::Single(f) => f.len(),
            Parameterization::Channel {
                outside, inside, ..
            } => 5 + outside.len() + inside.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        match self {
            Parameterization::Single(f) => f.blocks(0, ""),
            Parameterization::Channel {
                outside, inside, ..
            } => {
                let mut b = vec![("geometry".to_string(), 0..5)];
                b.extend(outside.blocks(5, "outside_"));
                b.extend(inside.blocks(5 + outside.len(), "inside_"));
                b
            }
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        match self {
            Parameterization::Single(f) => f.hyper_names(""),
            Parameterization::Channel {
                outside, inside, ..
            } => {
                let mut n: Vec<String> = (1..=5).map(|i| format!("d{i}")).collect();
                n.extend(outside.hyper_names("1"));
                n.extend(inside.hyper_names("2"));
                n
            }
        }
    }

    pub fn hypers(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Parameterization::Single(f) => f.hypers(x),
            Parameterization::Channel {
                geometry,
                outside,
                inside,
            } => {
                let n1 = outside.len();
                let mut h: Vec<f64> = geometry
                    .iter()
                    .zip(x)
                    .map(|(b, r)| b.from_unconstrained(*r))
                    .collect();
                h.extend(outside.hypers(&x[5..5 + n1])?);
                h.extend(inside.hypers(&x[5 + n1..])?);
                Ok(h)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Parameterization::Single(f) => f.sample(rng),
            Parameterization::Channel {
                outside, inside, ..
            } => {
                let mut x = standard_normals(5, rng);
                x.extend(outside.sample(rng)?);
                x.extend(inside.sample(rng)?);
                Ok(x)
            }
        }
    }

    pub fn geometry(&self, x: &[f64]) -> Option<ChannelGeometry> {
        match self {
            Parameterization::Channel { geometry, .. } => {
                let mut d = [0.0; 5];
                for k in 0..5 {
                    d[k] = geometry[k].from_unconstrained(x[k]);
                }
                Some(ChannelGeometry::from_array(d))
            }
            _ => None,
        }
    }
}

/// Map from the latent field to the PDE coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientMap {
    /// The field itself is the PDE input (source problem).
    Identity,
    /// `κ = exp(u)`.
    Exp,
    /// `κ = κ₊ χ_{u>0} + κ₋ χ_{u≤0}`.
    LevelSet(LevelSetSpec),
}

#[derive(Debug, Clone)]
pub enum Physics {
    Darcy {
        problem: DarcyProblem,
        functionals: Vec<Functional>,
    },
    /// The source problem is linear; observations are `R u`.
    Source { response: DMatrix<f64> },
}

impl Physics {
    pub fn darcy(problem: DarcyProblem, functionals: Vec<Functional>) -> Self {
        Physics::Darcy {
            problem,
            functionals,
        }
    }

    pub fn source(problem: &SourceProblem1D, functionals: &[Functional]) -> Self {
        Physics::Source {
            response: problem.response_matrix(functionals),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Physics::Darcy { functionals, .. } => functionals.len(),
            Physics::Source { response } => response.nrows(),
        }
    }

    /// Observations for a given PDE coefficient (full-layout `κ` for Darcy
    /// flow, interior source for the 1D problem).
    pub fn apply(&self, coefficient: &Field) -> Result<Vec<f64>> {
        match self {
            Physics::Darcy {
                problem,
                functionals,
            } => Ok(observe(&solve_darcy(coefficient, problem)?, functionals)),
            Physics::Source { response } => {
                if coefficient.values().len() != response.ncols() {
                    return Err(Error::DimensionMismatch {
                        context: "source field",
                        expected: response.ncols(),
                        found: coefficient.values().len(),
                    });
                }
                Ok(
                    (response * DVector::from_column_slice(coefficient.values()))
                        .as_slice()
                        .to_vec(),
                )
            }
        }
    }
}

/// Parameterization, coefficient map and physics bundled into `G`.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub param: Parameterization,
    pub coefficient: CoefficientMap,
    pub physics: Physics,
}

impl ForwardModel {
    pub fn new(
        param: Parameterization,
        coefficient: CoefficientMap,
        physics: Physics,
    ) -> Result<Self> {
        match (&physics, &param, coefficient) {
            (Physics::Source { .. }, Parameterization::Single(_), CoefficientMap::Identity) => {}
            (Physics::Darcy { .. }, Parameterization::Single(_), CoefficientMap::Exp)
            | (Physics::Darcy { .. }, Parameterization::Single(_), CoefficientMap::LevelSet(_))
            | (Physics::Darcy { .. }, Parameterization::Channel { .. }, CoefficientMap::Exp) => {}
            _ => {
                return Err(Error::Config(
                    "parameterization, coefficient map and model problem do not fit together"
                        .into(),
                ))
            }
        }
        Ok(ForwardModel {
            param,
            coefficient,
            physics,
        })
    }

    /// The unknown field: `u` (interior) for a single field, `log κ` (full
    /// layout) for the channel.
    pub fn field(&self, x: &[f64]) -> Result<Field> {
        match &self.param {
            Parameterization::Single(f) => f.field(x),
            Parameterization::Channel {
                outside, inside, ..
            } => {
                let n1 = outside.len();
                let spec = ChannelSpec {
                    geometry: self.param.geometry(x).unwrap(),
                    log_kappa_outside: outside.field(&x[5..5 + n1])?.to_full(outside.mean()),
                    log_kappa_inside: inside.field(&x[5 + n1..])?.to_full(inside.mean()),
                };
                let d = *spec.log_kappa_inside.domain();
                channel_map(&spec, &d)
            }
        }
    }

    /// PDE coefficient on the layout the physics expects.
    pub fn coefficient(&self, x: &[f64]) -> Result<Field> {
        let f = self.field(x)?;
        let boundary = match &self.param {
            Parameterization::Single(p) => p.mean(),
            Parameterization::Channel { .. } => 0.0,
        };
        match (&self.physics, self.coefficient) {
            (Physics::Source { .. }, _) => Ok(f),
            (Physics::Darcy { .. }, CoefficientMap::LevelSet(spec)) => {
                Ok(level_set_map(&f.to_full(boundary), &spec))
            }
            (Physics::Darcy { .. }, _) => exp_map(&f.to_full(boundary)),
        }
    }

    /// Field compared against the truth: `u` for the source problem and
    /// `log κ` for Darcy flow.
    pub fn reported_field(&self, x: &[f64]) -> Result<Field> {
        match self.physics {
            Physics::Source { .. } => self.field(x),
            Physics::Darcy { .. } => Ok(self.coefficient(x)?.map(f64::ln)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.param.sample(rng)
    }
}

impl ForwardMap for ForwardModel {
    fn input_len(&self) -> usize {
        self.param.len()
    }

    fn output_len(&self) -> usize {
        self.physics.output_len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                context: "latent vector",
                expected: self.input_len(),
                found: x.len(),
            });
        }
        self.physics.apply(&self.coefficient(x)?)
    }
}
