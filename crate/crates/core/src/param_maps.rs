//! Maps from latent variables to PDE coefficients: level set thresholding,
//! the channel geometry, the exponential, and the non-centered transform
//! `T : (ξ, θ) ↦ u`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{white_noise, Domain, Field, Layout, SpectralBasis};
use crate::priors::{
    apply_sqrt_cov, cauchy_from_gaussian, cauchy_increment_count, cauchy_path, g_map,
    nonstationary_transform, GMap, MaternSpec, PathInterpolation, UniformBijection,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetSpec {
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    #[serde(default)]
    pub threshold: f64,
}

impl LevelSetSpec {
    pub fn new(kappa_minus: f64, kappa_plus: f64) -> Result<Self> {
        let s = LevelSetSpec {
            kappa_minus,
            kappa_plus,
            threshold: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_minus > 0.0 && self.kappa_plus > 0.0) {
            return Err(Error::param("kappa", "level values must be positive"));
        }
        if self.kappa_minus == self.kappa_plus {
            return Err(Error::param("kappa", "level values must differ"));
        }
        Ok(())
    }

    pub fn apply(&self, u: f64) -> f64 {
        if u > self.threshold {
            self.kappa_plus
        } else {
            self.kappa_minus
        }
    }
}

/// `κ = κ₊` where `u > threshold`, `κ₋` on the closed complement.
pub fn level_set_map(u: &Field, spec: &LevelSetSpec) -> Field {
    u.map(|v| spec.apply(v))
}

pub fn exp_map(u: &Field) -> Result<Field> {
    if let Some(v) = u.values().iter().find(|v| v.abs() > 700.0) {
        return Err(Error::param(
            "u",
            format!("|u| = {} overflows exp", v.abs()),
        ));
    }
    Ok(u.map(f64::exp))
}

/// Five-parameter sinusoidal channel in unit-box coordinates `(s, t)`:
/// centerline `t = d4 + s tan(d3) + d1 sin(d2 s)`, half-width `d5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    /// amplitude
    pub d1: f64,
    /// angular frequency
    pub d2: f64,
    /// angle (radians)
    pub d3: f64,
    /// initial point
    pub d4: f64,
    /// width
    pub d5: f64,
}

impl ChannelGeometry {
    pub fn from_array(d: [f64; 5]) -> Self {
        ChannelGeometry {
            d1: d[0],
            d2: d[1],
            d3: d[2],
            d4: d[3],
            d5: d[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d5 > 0.0) {
            return Err(Error::param("d5", "channel width must be positive"));
        }
        if !(self.d2 > 0.0) {
            return Err(Error::param("d2", "channel frequency must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, s: f64, t: f64) -> bool {
        let center = self.d4 + s * self.d3.tan() + self.d1 * (self.d2 * s).sin();
        (t - center).abs() < self.d5
    }

    /// Membership of each node of `layout` on `domain`.
    pub fn indicator(&self, domain: &Domain, layout: Layout) -> Vec<bool> {
        (0..domain.len(layout))
            .map(|i| {
                let x = domain.coords(layout, i);
                self.contains(x[0] / domain.extent(0), x[1] / domain.extent(1))
            })
            .collect()
    }

    /// Quadrature estimate of the fraction of the domain inside the channel.
    pub fn area_fraction(&self, domain: &Domain, layout: Layout) -> f64 {
        let w = Field::quadrature_weights(domain, layout);
        let inside: f64 = self
            .indicator(domain, layout)
            .iter()
            .zip(&w)
            .filter(|(c, _)| **c)
            .map(|(_, w)| w)
            .sum();
        inside / w.iter().sum::<f64>()
    }
}

/// Channel geometry plus the two log-permeability fields (`log κ₂` inside,
/// `log κ₁` outside).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub geometry: ChannelGeometry,
    pub log_kappa_inside: Field,
    pub log_kappa_outside: Field,
}

/// Log-permeability of the channelized medium on the layout of the input
/// fields.
pub fn channel_map(spec: &ChannelSpec, domain: &Domain) -> Result<Field> {
    spec.geometry.validate()?;
    let (inside, outside) = (&spec.log_kappa_inside, &spec.log_kappa_outside);
    if inside.layout() != outside.layout() || inside.values().len() != outside.values().len() {
        return Err(Error::DimensionMismatch {
            context: "channel fields",
            expected: inside.values().len(),
            found: outside.values().len(),
        });
    }
    let layout = inside.layout();
    let mask = spec.geometry.indicator(domain, layout);
    let values = mask
        .iter()
        .zip(inside.values().iter().zip(outside.values()))
        .map(|(&m, (&a, &b))| if m { a } else { b })
        .collect();
    Field::new(*domain, layout, values)
}

/// Prior family behind a non-centered transform.
#[derive(Debug, Clone, PartialEq)]
pub enum HierarchyPrior {
    /// `θ = (α, τ)` with uniform priors; `u = mean + (τ²I − Δ)^{−α/2} ξ`.
    ScalarMatern {
        alpha: UniformBijection,
        tau: UniformBijection,
        mean: f64,
    },
    /// `θ = ζ` (white noise of `v`); `v = m + C_v^{1/2} ζ`, `ℓ = g(v)`.
    LengthScaleGauss {
        alpha: u32,
        v_prior: MaternSpec,
        g: GMap,
    },
    /// `θ` = standard normals mapped to the Cauchy increments of `v`;
    /// `ℓ = g(v)`.
    LengthScaleCauchy {
        alpha: u32,
        delta: f64,
        g: GMap,
        interp: PathInterpolation,
    },
}

/// The deterministic map `T(ξ, θ_raw) = u`.
#[derive(Debug, Clone)]
pub struct NoncenteredTransform {
    basis: SpectralBasis,
    prior: HierarchyPrior,
}

impl NoncenteredTransform {
    pub fn new(basis: SpectralBasis, prior: HierarchyPrior) -> Result<Self> {
        let dim = basis.domain().dim();
        match &prior {
            HierarchyPrior::ScalarMatern { alpha, .. } => {
                if !(alpha.lo >= dim as f64 / 2.0) {
                    return Err(Error::param(
                        "alpha_bounds",
                        "lower bound must be at least d/2",
                    ));
                }
            }
            HierarchyPrior::LengthScaleGauss { v_prior, g, .. } => {
                v_prior.validate(dim)?;
                g.validate()?;
            }
            HierarchyPrior::LengthScaleCauchy { delta, g, .. } => {
                cauchy_increment_count(basis.domain(), *delta)?;
                g.validate()?;
            }
        }
        Ok(NoncenteredTransform { basis, prior })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn prior(&self) -> &HierarchyPrior {
        &self.prior
    }

    /// Constant prior mean of `u` (also its Dirichlet boundary value).
    pub fn mean(&self) -> f64 {
        match &self.prior {
            HierarchyPrior::ScalarMatern { mean, .. } => *mean,
            _ => 0.0,
        }
    }

    pub fn xi_len(&self) -> usize {
        self.basis.len()
    }

    pub fn hyper_len(&self) -> usize {
        match &self.prior {
            HierarchyPrior::ScalarMatern { .. } => 2,
            HierarchyPrior::LengthScaleGauss { .. } => self.basis.len(),
            HierarchyPrior::LengthScaleCauchy { delta, .. } => {
                cauchy_increment_count(self.basis.domain(), *delta).unwrap_or(0)
            }
        }
    }

    /// Decoded scalar hyperparameters `(α, τ)`; `None` for field-valued ones.
    pub fn scalar_hypers(&self, theta_raw: &[f64]) -> Option<(f64, f64)> {
        match &self.prior {
            HierarchyPrior::ScalarMatern { alpha, tau, .. } => Some((
                alpha.from_unconstrained(theta_raw[0]),
                tau.from_unconstrained(theta_raw[1]),
            )),
            _ => None,
        }
    }

    /// The hyperparameter field `v` for field-valued priors.
    pub fn hyper_field(&self, theta_raw: &[f64]) -> Result<Option<Field>> {
        match &self.prior {
            HierarchyPrior::ScalarMatern { .. } => Ok(None),
            HierarchyPrior::LengthScaleGauss { v_prior, .. } => {
                Ok(Some(apply_sqrt_cov(v_prior, &self.basis, theta_raw)?))
            }
            HierarchyPrior::LengthScaleCauchy { delta, interp, .. } => Ok(Some(cauchy_path(
                &theta_raw
                    .iter()
                    .map(|&z| cauchy_from_gaussian(z, *delta))
                    .collect::<Vec<_>>(),
                *delta,
                self.basis.domain(),
                *interp,
            )?)),
        }
    }

    /// Length-scale field `ℓ(x) = g(v(x))` for field-valued priors.
    pub fn length_scale(&self, theta_raw: &[f64]) -> Result<Option<Field>> {
        let g = match &self.prior {
            HierarchyPrior::ScalarMatern { .. } => return Ok(None),
            HierarchyPrior::LengthScaleGauss { g, .. }
            | HierarchyPrior::LengthScaleCauchy { g, .. } => g,
        };
        match self.hyper_field(theta_raw)? {
            Some(v) => Ok(Some(g_map(g, &v)?)),
            None => Ok(None),
        }
    }

    pub fn apply(&self, xi: &[f64], theta_raw: &[f64]) -> Result<Field> {
        if theta_raw.len() != self.hyper_len() {
            return Err(Error::DimensionMismatch {
                context: "hyperparameter block",
                expected: self.hyper_len(),
                found: theta_raw.len(),
            });
        }
        if let Some(i) = theta_raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("hyperparameter entry {i}")));
        }
        match &self.prior {
            HierarchyPrior::ScalarMatern { mean, .. } => {
                let (alpha, tau) = self.scalar_hypers(theta_raw).unwrap();
                apply_sqrt_cov(
                    &MaternSpec::new(alpha, tau).with_mean(*mean),
                    &self.basis,
                    xi,
                )
            }
            HierarchyPrior::LengthScaleGauss { alpha, .. }
            | HierarchyPrior::LengthScaleCauchy { alpha, .. } => {
                let ell = self.length_scale(theta_raw)?.unwrap();
                nonstationary_transform(*alpha, &ell, xi, &self.basis)
            }
        }
    }

    /// Draws `(ξ, θ_raw)` from the prior; both blocks are standard normal.
    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let xi = white_noise(self.basis.domain(), rng);
        let theta = match &self.prior {
            HierarchyPrior::ScalarMatern { .. } => crate::grid::standard_normals(2, rng),
            HierarchyPrior::LengthScaleGauss { .. } => white_noise(self.basis.domain(), rng),
            HierarchyPrior::LengthScaleCauchy { .. } => {
                crate::grid::standard_normals(self.hyper_len(), rng)
            }
        };
        Ok((xi, theta))
    }
}

/// Convenience wrapper matching the `T(ξ, θ)` signature.
pub fn noncentered_transform(
    xi: &[f64],
    theta_raw: &[f64],
    transform: &NoncenteredTransform,
) -> Result<Field> {
    transform.apply(xi, theta_raw)
}
