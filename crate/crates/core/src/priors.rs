//! Whittle-Matérn fields (stationary and length-scale-modulated),
//! Cauchy random walks, length-scale maps and hyperparameter bijections.

use rand::Rng;
use rand_distr::{Cauchy, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::grid::{white_noise, Domain, Field, Layout, SpectralBasis};
use crate::linalg::{BandedCholesky, CsrMatrix, Tridiagonal};

/// Whittle-Matérn prior with covariance `amplitude² (τ² I − Δ)^{−α}` and a
/// constant mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternSpec {
    pub alpha: f64,
    pub tau: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub mean: f64,
}

fn one() -> f64 {
    1.0
}

impl MaternSpec {
    pub fn new(alpha: f64, tau: f64) -> Self {
        MaternSpec {
            alpha,
            tau,
            amplitude: 1.0,
            mean: 0.0,
        }
    }

    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > dim as f64 / 2.0) {
            return Err(Error::param(
                "alpha",
                format!("{} must exceed d/2 = {}", self.alpha, dim as f64 / 2.0),
            ));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param(
                "tau",
                format!("{} must be positive", self.tau),
            ));
        }
        if !(self.amplitude > 0.0) || !self.mean.is_finite() {
            return Err(Error::param(
                "amplitude",
                "must be positive with finite mean",
            ));
        }
        Ok(())
    }

    /// Standard deviation of the coefficient of a mode with eigenvalue `lambda`.
    pub fn mode_std(&self, lambda: f64) -> f64 {
        self.amplitude * (self.tau * self.tau + lambda).powf(-0.5 * self.alpha)
    }

    pub fn mode_variance(&self, lambda: f64) -> f64 {
        self.mode_std(lambda).powi(2)
    }
}

/// `u = mean + C^{1/2} ξ`, applied coefficient-wise in the sine basis.
pub fn apply_sqrt_cov(spec: &MaternSpec, basis: &SpectralBasis, xi: &[f64]) -> Result<Field> {
    spec.validate(basis.domain().dim())?;
    if xi.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "white noise coefficients",
            expected: basis.len(),
            found: xi.len(),
        });
    }
    let coeffs: Vec<f64> = basis
        .modes()
        .iter()
        .zip(xi)
        .map(|(m, x)| spec.mode_std(m.eigenvalue) * x)
        .collect();
    let mut values = basis.synthesize(&coeffs);
    if spec.mean != 0.0 {
        values.iter_mut().for_each(|v| *v += spec.mean);
    }
    Field::new(*basis.domain(), Layout::Interior, values)
}

pub fn sample_matern<R: Rng + ?Sized>(
    spec: &MaternSpec,
    basis: &SpectralBasis,
    rng: &mut R,
) -> Result<Field> {
    spec.validate(basis.domain().dim())?;
    let xi = white_noise(basis.domain(), rng);
    apply_sqrt_cov(spec, basis, &xi)
}

/// Positive length-scale map `ℓ = g(v)`, clamped to `[floor, cap]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GMap {
    pub kind: GKind,
    pub floor: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GKind {
    Exp,
    /// `g(s) = a / (b + c|s|) + d`
    Rational {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
}

impl GMap {
    pub fn exp(floor: f64, cap: f64) -> Self {
        GMap {
            kind: GKind::Exp,
            floor,
            cap,
        }
    }

    pub fn rational(a: f64, b: f64, c: f64, d: f64, floor: f64, cap: f64) -> Self {
        GMap {
            kind: GKind::Rational { a, b, c, d },
            floor,
            cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GKind::Rational { a, b, c, d } = self.kind {
            if !(a > 0.0 && c > 0.0 && b >= 0.0 && d >= 0.0) {
                return Err(Error::param(
                    "g_params",
                    format!("need a, c > 0 and b, d >= 0; got ({a}, {b}, {c}, {d})"),
                ));
            }
        }
        if !(self.floor > 0.0) || !(self.cap > self.floor) {
            return Err(Error::param(
                "g_bounds",
                format!("need 0 < floor < cap; got [{}, {}]", self.floor, self.cap),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, s: f64) -> f64 {
        let raw = match self.kind {
            GKind::Exp => s.exp(),
            GKind::Rational { a, b, c, d } => {
                let den = b + c * s.abs();
                if den > 0.0 {
                    a / den + d
                } else {
                    f64::INFINITY
                }
            }
        };
        raw.clamp(self.floor, self.cap)
    }
}

pub fn g_map(g: &GMap, v: &Field) -> Result<Field> {
    g.validate()?;
    let out = v.map(|s| g.apply(s));
    if out.values().iter().any(|&l| !(l > 0.0)) {
        return Err(Error::param("g", "length scale must be positive"));
    }
    Ok(out)
}

/// Deterministic map `(ξ, ℓ) ↦ u` solving
/// `(I − ℓ(x)² Δ_h)^{α/2} u = ℓ(x)^{d/2} W`, where `W` is the grid
/// realization of the white noise with sine coefficients `ξ`.
///
/// `alpha` must be a positive even integer.
pub fn nonstationary_transform(
    alpha: u32,
    ell: &Field,
    xi: &[f64],
    basis: &SpectralBasis,
) -> Result<Field> {
    if alpha == 0 || alpha % 2 != 0 {
        return Err(Error::param(
            "alpha",
            format!("{alpha}: the length-scale-modulated sampler needs a positive even integer"),
        ));
    }
    let domain = basis.domain();
    if ell.layout() != Layout::Interior || ell.values().len() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "length-scale field",
            expected: basis.len(),
            found: ell.values().len(),
        });
    }
    if xi.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "white noise coefficients",
            expected: basis.len(),
            found: xi.len(),
        });
    }
    let ell = ell.values();
    if ell.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::param(
            "ell",
            "length scale must be positive and finite",
        ));
    }
    let half_d = domain.dim() as f64 / 2.0;
    let w = basis.synthesize(xi);
    let mut u: Vec<f64> = w.iter().zip(ell).map(|(w, l)| l.powf(half_d) * w).collect();
    // (ℓ⁻² − Δ_h) u_new = ℓ⁻² u_old is the symmetric form of one solve
    let inv_l2: Vec<f64> = ell.iter().map(|l| 1.0 / (l * l)).collect();
    let solver = ShiftedLaplacian::new(basis.spectral_domain(), &inv_l2)?;
    for _ in 0..alpha / 2 {
        let rhs: Vec<f64> = u.iter().zip(&inv_l2).map(|(u, s)| u * s).collect();
        u = solver.solve(&rhs);
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("length-scale-modulated field".into()));
    }
    Field::new(*domain, Layout::Interior, u)
}

/// `diag(s) − Δ_h` on interior nodes with zero Dirichlet data.
enum ShiftedLaplacian {
    OneD(Tridiagonal),
    TwoD(BandedCholesky),
}

impl ShiftedLaplacian {
    fn new(domain: &Domain, shift: &[f64]) -> Result<Self> {
        let n = domain.nodes_per_axis(Layout::Interior);
        let hx2 = domain.spacing(0).powi(2);
        if domain.dim() == 1 {
            let off = vec![-1.0 / hx2; n[0] - 1];
            let diag: Vec<f64> = shift.iter().map(|s| s + 2.0 / hx2).collect();
            return Ok(ShiftedLaplacian::OneD(Tridiagonal::factor(
                &off, &diag, &off,
            )?));
        }
        let hy2 = domain.spacing(1).powi(2);
        let mut t = Vec::with_capacity(5 * shift.len());
        for j in 0..n[1] {
            for i in 0..n[0] {
                let k = i + n[0] * j;
                t.push((k, k, shift[k] + 2.0 / hx2 + 2.0 / hy2));
                if i > 0 {
                    t.push((k, k - 1, -1.0 / hx2));
                }
                if i + 1 < n[0] {
                    t.push((k, k + 1, -1.0 / hx2));
                }
                if j > 0 {
                    t.push((k, k - n[0], -1.0 / hy2));
                }
                if j + 1 < n[1] {
                    t.push((k, k + n[0], -1.0 / hy2));
                }
            }
        }
        let a = CsrMatrix::from_triplets(shift.len(), t);
        Ok(ShiftedLaplacian::TwoD(BandedCholesky::factor(&a)?))
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            ShiftedLaplacian::OneD(t) => t.solve(b),
            ShiftedLaplacian::TwoD(c) => c.solve(b),
        }
    }
}

pub fn sample_nonstationary<R: Rng + ?Sized>(
    alpha: u32,
    v: &Field,
    g: &GMap,
    basis: &SpectralBasis,
    rng: &mut R,
) -> Result<Field> {
    let ell = g_map(g, v)?;
    let xi = white_noise(basis.domain(), rng);
    nonstationary_transform(alpha, &ell, &xi, basis)
}

/// How a Cauchy random-walk path is extended between its knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathInterpolation {
    #[default]
    PiecewiseConstant,
    Linear,
}

/// Number of Cauchy increments needed to cover a 1D domain with knot spacing `delta`.
pub fn cauchy_increment_count(domain: &Domain, delta: f64) -> Result<usize> {
    if domain.dim() != 1 {
        return Err(Error::InvalidDomain(
            "Cauchy process needs a 1D domain".into(),
        ));
    }
    let l = domain.extent(0);
    if !(delta > 0.0) || delta > l {
        return Err(Error::param(
            "delta",
            format!("{delta} must lie in (0, {l}]"),
        ));
    }
    Ok(((l / delta) - 1e-9).ceil().max(1.0) as usize)
}

/// Builds the path `v` on interior nodes from its increments: `v(0) = 0`
/// and the value at knot `k δ` is the sum of the first `k` increments.
pub fn cauchy_path(
    increments: &[f64],
    delta: f64,
    domain: &Domain,
    interp: PathInterpolation,
) -> Result<Field> {
    let n_inc = cauchy_increment_count(domain, delta)?;
    if increments.len() != n_inc {
        return Err(Error::DimensionMismatch {
            context: "Cauchy increments",
            expected: n_inc,
            found: increments.len(),
        });
    }
    let mut knots = Vec::with_capacity(n_inc + 1);
    knots.push(0.0);
    for inc in increments {
        knots.push(knots.last().unwrap() + inc);
    }
    Ok(Field::from_fn(*domain, Layout::Interior, |x| {
        let t = x[0] / delta;
        let k = (t.floor() as usize).min(n_inc);
        match interp {
            PathInterpolation::PiecewiseConstant => knots[k],
            PathInterpolation::Linear => {
                if k >= n_inc {
                    knots[n_inc]
                } else {
                    let f = t - k as f64;
                    knots[k] + f * (knots[k + 1] - knots[k])
                }
            }
        }
    }))
}

pub fn cauchy_increments<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> Result<Vec<f64>> {
    let dist = Cauchy::new(0.0, delta).map_err(|e| Error::param("delta", e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Cauchy(0, δ) variate `δ tan(π(Φ(z) − ½))` of a standard normal `z`,
/// evaluated through the smaller tail probability for accuracy.
pub fn cauchy_from_gaussian(z: f64, delta: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if z < 0.0 {
        -delta / (pi * normal_cdf(z)).tan()
    } else {
        delta / (pi * normal_cdf(-z)).tan()
    }
}

pub fn sample_cauchy_process<R: Rng + ?Sized>(
    domain: &Domain,
    delta: f64,
    interp: PathInterpolation,
    rng: &mut R,
) -> Result<Field> {
    let n = cauchy_increment_count(domain, delta)?;
    let inc = cauchy_increments(n, delta, rng)?;
    cauchy_path(&inc, delta, domain, interp)
}

/// Normal-quantile bijection between ℝ and an open interval `(lo, hi)`:
/// `θ = lo + (hi − lo) Φ(raw)`. Standard normal raws map to uniform θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBijection {
    pub lo: f64,
    pub hi: f64,
}

impl UniformBijection {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::param(
                "bounds",
                format!("need a < b, got [{lo}, {hi}]"),
            ));
        }
        Ok(UniformBijection { lo, hi })
    }

    pub fn to_unconstrained(&self, theta: f64) -> Result<f64> {
        if !(theta > self.lo && theta < self.hi) {
            return Err(Error::param(
                "theta",
                format!("{theta} outside ({}, {})", self.lo, self.hi),
            ));
        }
        let p = (theta - self.lo) / (self.hi - self.lo);
        Ok(normal_quantile(p))
    }

    pub fn from_unconstrained(&self, raw: f64) -> f64 {
        self.lo + (self.hi - self.lo) * normal_cdf(raw)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

pub fn hyper_to_unconstrained(theta: f64, bounds: &UniformBijection) -> Result<f64> {
    bounds.to_unconstrained(theta)
}

pub fn unconstrained_to_hyper(raw: f64, bounds: &UniformBijection) -> f64 {
    bounds.from_unconstrained(raw)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // Newton polish; the series behind erfc_inv stops near 1e-11 relative
    for _ in 0..2 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if !(pdf > 0.0) || !x.is_finite() {
            break;
        }
        let r = if x < 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        x -= r / pdf;
    }
    x
}

/// Prior placed on a hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperPrior {
    Uniform(UniformBijection),
    GaussianField {
        field: MaternSpec,
        g: GMap,
    },
    CauchyProcess {
        delta: f64,
        g: GMap,
        interp: PathInterpolation,
    },
}

impl HyperPrior {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            HyperPrior::Uniform(b) => UniformBijection::new(b.lo, b.hi).map(|_| ()),
            HyperPrior::GaussianField { field, g } => {
                field.validate(dim)?;
                g.validate()
            }
            HyperPrior::CauchyProcess { delta, g, .. } => {
                if !(*delta > 0.0) {
                    return Err(Error::param("delta", "must be positive"));
                }
                g.validate()
            }
        }
    }
}
