//! Experiment configuration: TOML schema, defaults and validation.
//!
//! Every field is optional in the file. [`ExperimentConfig::resolve`] fills
//! model-dependent defaults so that the echoed configuration is complete.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eki::UpsilonMode;
use crate::error::{Error, Result};
use crate::forward::NoiseLevel;
use crate::grid::CoordinateScaling;
use crate::priors::PathInterpolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelProblem {
    Darcy,
    Source1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Plain,
    LevelSet,
    Channel,
    CenteredHier,
    NoncenteredHier,
    NoncenteredFieldGauss,
    NoncenteredFieldCauchy,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Plain => "plain",
            ParamKind::LevelSet => "level-set",
            ParamKind::Channel => "channel",
            ParamKind::CenteredHier => "centered-hier",
            ParamKind::NoncenteredHier => "noncentered-hier",
            ParamKind::NoncenteredFieldGauss => "noncentered-field-gauss",
            ParamKind::NoncenteredFieldCauchy => "noncentered-field-cauchy",
        }
    }
}

/// Hierarchy used inside the level set and channel parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hierarchy {
    None,
    Centered,
    Noncentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingChoice {
    Auto,
    Physical,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GChoice {
    Exp,
    Rational,
}

/// Length scale of the non-hierarchical prior on the source problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlainLengthScale {
    /// Stationary prior with the fixed `alpha` and `tau`.
    Constant,
    /// `ℓ = g(v)` with `v` one fixed draw from the hyperparameter field prior.
    FieldDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    /// Closed-form step/bump profile on the source problem.
    Step,
    /// Drawn from the model prior at the configured true hyperparameters.
    PriorDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Matern,
    LengthScaleGauss,
    LengthScaleCauchy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub model: Option<ModelProblem>,
    pub n_cells: Option<usize>,
    pub extent: Option<f64>,
    pub coordinate_scaling: Option<ScalingChoice>,
    pub solver: Option<SolverChoice>,
    pub cg_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSection {
    pub kind: Option<ParamKind>,
    pub hierarchy: Option<Hierarchy>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub alpha_bounds: Option<[f64; 2]>,
    pub tau_bounds: Option<[f64; 2]>,
    /// Fixed hyperparameters of the non-hierarchical prior.
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub mean: Option<f64>,
    pub plain_length_scale: Option<PlainLengthScale>,
    /// Even exponent of the length-scale-modulated SPDE.
    pub ns_alpha: Option<u32>,
    pub v_alpha: Option<f64>,
    pub v_tau: Option<f64>,
    pub v_amplitude: Option<f64>,
    pub v_mean: Option<f64>,
    pub g: Option<GChoice>,
    pub g_a: Option<f64>,
    pub g_b: Option<f64>,
    pub g_c: Option<f64>,
    pub g_d: Option<f64>,
    pub ell_floor: Option<f64>,
    pub ell_cap: Option<f64>,
    pub cauchy_delta: Option<f64>,
    pub cauchy_interp: Option<PathInterpolation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSetSection {
    pub kappa_minus: Option<f64>,
    pub kappa_plus: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub d1_bounds: Option<[f64; 2]>,
    pub d2_bounds: Option<[f64; 2]>,
    pub d3_bounds: Option<[f64; 2]>,
    pub d4_bounds: Option<[f64; 2]>,
    pub d5_bounds: Option<[f64; 2]>,
    pub mean_outside: Option<f64>,
    pub mean_inside: Option<f64>,
    pub alpha_bounds: Option<[f64; 2]>,
    pub tau_bounds: Option<[f64; 2]>,
    /// Fixed (α₁, τ₁, α₂, τ₂) for the non-hierarchical channel.
    pub fixed_hypers: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSection {
    pub kind: Option<TruthKind>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    /// (α₁, α₂, τ₁, τ₂) of the channel fields.
    pub channel_hypers: Option<[f64; 4]>,
    pub channel_geometry: Option<[f64; 5]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSection {
    /// Mollified observation centers per axis (Darcy).
    pub lattice: Option<usize>,
    /// Mollifier width as a fraction of the domain length.
    pub sigma_frac: Option<f64>,
    /// Number of point evaluations (source problem).
    pub n_points: Option<usize>,
    pub gamma: Option<f64>,
    pub noise: Option<bool>,
    pub noise_level: Option<NoiseLevel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkiSection {
    pub n_ensemble: Option<usize>,
    pub rho: Option<f64>,
    pub zeta: Option<f64>,
    pub upsilon0: Option<f64>,
    pub max_iter: Option<usize>,
    pub max_doublings: Option<usize>,
    pub perturb: Option<bool>,
    pub upsilon_mode: Option<UpsilonMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n_initializations: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub record_wall_time: Option<bool>,
    /// Number of mean-field snapshots kept per initialization.
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePriorSection {
    pub kind: Option<SampleKind>,
    pub alphas: Option<Vec<f64>>,
    pub taus: Option<Vec<f64>>,
    pub n_cells: Option<usize>,
    pub extent: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub parameterization: ParamSection,
    pub prior: PriorSection,
    pub level_set: LevelSetSection,
    pub channel: ChannelSection,
    pub truth: TruthSection,
    pub observations: ObservationSection,
    pub eki: EkiSection,
    pub run: RunSection,
    pub sample_prior: SamplePriorSection,
}

fn fill<T: Copy>(slot: &mut Option<T>, v: T) -> T {
    *slot.get_or_insert(v)
}

fn check_bounds(name: &'static str, b: [f64; 2]) -> Result<()> {
    if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() {
        return Err(Error::Config(format!(
            "{name}: need lower < upper, got {b:?}"
        )));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Parses, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::from_toml_str(&text)?;
        c.resolve()?;
        Ok(c)
    }

    pub fn model(&self) -> ModelProblem {
        self.problem.model.expect("resolved config")
    }

    pub fn kind(&self) -> ParamKind {
        self.parameterization.kind.expect("resolved config")
    }

    /// Materializes every default and validates the result.
    pub fn resolve(&mut self) -> Result<()> {
        let model = self
            .problem
            .model
            .ok_or_else(|| Error::Config("problem.model is required (darcy or source1d)".into()))?;
        let darcy = model == ModelProblem::Darcy;

        let p = &mut self.problem;
        fill(&mut p.n_cells, if darcy { 40 } else { 1000 });
        fill(&mut p.extent, if darcy { 6.0 } else { 10.0 });
        fill(&mut p.coordinate_scaling, ScalingChoice::Auto);
        fill(&mut p.solver, SolverChoice::Direct);
        fill(&mut p.cg_tol, 1e-10);

        let kind = fill(
            &mut self.parameterization.kind,
            if darcy {
                ParamKind::NoncenteredHier
            } else {
                ParamKind::NoncenteredFieldGauss
            },
        );
        let hierarchy = fill(&mut self.parameterization.hierarchy, Hierarchy::Noncentered);

        let pr = &mut self.prior;
        let ab = fill(&mut pr.alpha_bounds, [1.3, 4.0]);
        let tb = fill(
            &mut pr.tau_bounds,
            if darcy { [5.0, 30.0] } else { [0.5, 5.0] },
        );
        fill(
            &mut pr.alpha,
            if darcy { 0.5 * (ab[0] + ab[1]) } else { 2.0 },
        );
        fill(&mut pr.tau, if darcy { 0.5 * (tb[0] + tb[1]) } else { 1.0 });
        fill(&mut pr.mean, 0.0);
        fill(
            &mut pr.plain_length_scale,
            if darcy {
                PlainLengthScale::Constant
            } else {
                PlainLengthScale::FieldDraw
            },
        );
        fill(&mut pr.ns_alpha, 2);
        fill(&mut pr.v_alpha, 1.5);
        fill(&mut pr.v_tau, 1.0);
        fill(&mut pr.v_amplitude, 0.5);
        fill(&mut pr.v_mean, 0.0);
        let g = fill(
            &mut pr.g,
            if kind == ParamKind::NoncenteredFieldCauchy {
                GChoice::Rational
            } else {
                GChoice::Exp
            },
        );
        if g == GChoice::Rational {
            fill(&mut pr.g_a, 4.0);
            fill(&mut pr.g_b, 0.0);
            fill(&mut pr.g_c, 1.0);
            fill(&mut pr.g_d, 0.0);
        }
        let extent = self.problem.extent.unwrap();
        fill(&mut pr.ell_floor, 1e-6 * extent);
        fill(&mut pr.ell_cap, extent);
        fill(&mut pr.cauchy_delta, 0.5);
        fill(&mut pr.cauchy_interp, PathInterpolation::PiecewiseConstant);

        if kind == ParamKind::LevelSet {
            fill(&mut self.level_set.kappa_minus, 1.0);
            fill(&mut self.level_set.kappa_plus, 10.0);
        }
        if kind == ParamKind::Channel {
            let c = &mut self.channel;
            fill(&mut c.d1_bounds, [0.0, 1.0]);
            fill(&mut c.d2_bounds, [2.0, 13.0]);
            fill(&mut c.d3_bounds, [0.4, 1.0]);
            fill(&mut c.d4_bounds, [0.0, 1.0]);
            fill(&mut c.d5_bounds, [0.1, 0.3]);
            fill(&mut c.mean_outside, 1.0);
            fill(&mut c.mean_inside, 4.0);
            let a = fill(&mut c.alpha_bounds, [1.3, 3.0]);
            let t = fill(&mut c.tau_bounds, [8.0, 30.0]);
            let (am, tm) = (0.5 * (a[0] + a[1]), 0.5 * (t[0] + t[1]));
            fill(&mut c.fixed_hypers, [am, tm, am, tm]);
        }

        let t = &mut self.truth;
        fill(
            &mut t.kind,
            if darcy {
                TruthKind::PriorDraw
            } else {
                TruthKind::Step
            },
        );
        fill(&mut t.alpha, 3.0);
        fill(&mut t.tau, 10.0);
        if kind == ParamKind::Channel {
            fill(&mut t.channel_hypers, [2.0, 2.8, 30.0, 10.0]);
            fill(&mut t.channel_geometry, [0.2, 6.0, 0.5, 0.25, 0.15]);
        }

        let o = &mut self.observations;
        if darcy {
            fill(&mut o.lattice, 8);
            fill(&mut o.sigma_frac, 0.06);
        } else {
            fill(&mut o.n_points, 50);
        }
        fill(&mut o.gamma, 1e-4);
        fill(&mut o.noise, true);
        fill(&mut o.noise_level, NoiseLevel::Realized);

        let e = &mut self.eki;
        fill(&mut e.n_ensemble, 200);
        let rho = fill(&mut e.rho, 0.8);
        fill(&mut e.zeta, 1.1 / rho);
        fill(&mut e.upsilon0, 1.0);
        fill(&mut e.max_iter, 30);
        fill(&mut e.max_doublings, 60);
        fill(&mut e.perturb, true);
        fill(&mut e.upsilon_mode, UpsilonMode::Shared);

        let r = &mut self.run;
        fill(&mut r.n_initializations, 10);
        fill(&mut r.seed, 0);
        if r.out_dir.is_none() {
            r.out_dir = Some(PathBuf::from("runs").join(kind.as_str()));
        }
        fill(&mut r.record_wall_time, false);
        fill(&mut r.snapshots, 5);

        let s = &mut self.sample_prior;
        let sk = fill(&mut s.kind, SampleKind::Matern);
        if s.alphas.is_none() {
            s.alphas = Some(vec![1.6]);
        }
        if s.taus.is_none() {
            s.taus = Some(vec![10.0, 25.0, 50.0, 100.0]);
        }
        fill(&mut s.n_cells, 100);
        fill(
            &mut s.extent,
            if sk == SampleKind::Matern { 1.0 } else { 10.0 },
        );
        fill(&mut s.count, 1);

        let _ = hierarchy;
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        let darcy = self.model() == ModelProblem::Darcy;
        let kind = self.kind();
        if self.problem.n_cells.unwrap() < 2 {
            return Err(Error::Config("problem.n_cells must be at least 2".into()));
        }
        check_positive("problem.extent", self.problem.extent.unwrap())?;
        match (darcy, kind) {
            (true, ParamKind::NoncenteredFieldGauss | ParamKind::NoncenteredFieldCauchy) => {
                return Err(Error::Config(format!(
                    "parameterization {} is available for source1d only",
                    kind.as_str()
                )))
            }
            (false, ParamKind::LevelSet | ParamKind::Channel) => {
                return Err(Error::Config(format!(
                    "parameterization {} is available for darcy only",
                    kind.as_str()
                )))
            }
            _ => {}
        }
        let pr = &self.prior;
        check_bounds("prior.alpha_bounds", pr.alpha_bounds.unwrap())?;
        check_bounds("prior.tau_bounds", pr.tau_bounds.unwrap())?;
        let dim = if darcy { 2.0 } else { 1.0 };
        if pr.alpha_bounds.unwrap()[0] < dim / 2.0 {
            return Err(Error::Config(
                "prior.alpha_bounds: lower bound must be at least d/2".into(),
            ));
        }
        check_positive("prior.tau", pr.tau.unwrap())?;
        if darcy && pr.plain_length_scale.unwrap() == PlainLengthScale::FieldDraw {
            return Err(Error::Config(
                "prior.plain_length_scale = field-draw needs a 1D problem".into(),
            ));
        }
        if !(pr.alpha.unwrap() > dim / 2.0) {
            return Err(Error::Config("prior.alpha must exceed d/2".into()));
        }
        let ns = pr.ns_alpha.unwrap();
        if ns == 0 || ns % 2 != 0 {
            return Err(Error::Config(
                "prior.ns_alpha must be a positive even integer".into(),
            ));
        }
        check_positive("prior.cauchy_delta", pr.cauchy_delta.unwrap())?;
        if pr.cauchy_delta.unwrap() > self.problem.extent.unwrap() {
            return Err(Error::Config(
                "prior.cauchy_delta exceeds the domain length".into(),
            ));
        }
        if let Some(kp) = self.level_set.kappa_plus {
            check_positive("level_set.kappa_plus", kp)?;
            check_positive("level_set.kappa_minus", self.level_set.kappa_minus.unwrap())?;
        }
        if let Some(b) = self.channel.d5_bounds {
            for (n, b) in [
                ("channel.d1_bounds", self.channel.d1_bounds.unwrap()),
                ("channel.d2_bounds", self.channel.d2_bounds.unwrap()),
                ("channel.d3_bounds", self.channel.d3_bounds.unwrap()),
                ("channel.d4_bounds", self.channel.d4_bounds.unwrap()),
                ("channel.d5_bounds", b),
                ("channel.alpha_bounds", self.channel.alpha_bounds.unwrap()),
                ("channel.tau_bounds", self.channel.tau_bounds.unwrap()),
            ] {
                check_bounds(n, b)?;
            }
        }
        let o = &self.observations;
        check_positive("observations.gamma", o.gamma.unwrap())?;
        if let Some(s) = o.sigma_frac {
            check_positive("observations.sigma_frac", s)?;
        }
        let e = &self.eki;
        let rho = e.rho.unwrap();
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("eki.rho = {rho} must lie in (0, 1)")));
        }
        if !(e.zeta.unwrap() * rho > 1.0) {
            return Err(Error::Config(format!(
                "eki.zeta = {} must exceed 1/rho = {}",
                e.zeta.unwrap(),
                1.0 / rho
            )));
        }
        if e.n_ensemble.unwrap() < 2 {
            return Err(Error::Config("eki.n_ensemble must be at least 2".into()));
        }
        check_positive("eki.upsilon0", e.upsilon0.unwrap())?;
        if self.run.n_initializations.unwrap() < 1 {
            return Err(Error::Config(
                "run.n_initializations must be at least 1".into(),
            ));
        }
        if self.run.seed.unwrap() > i64::MAX as u64 {
            return Err(Error::Config(
                "run.seed must fit a TOML integer (at most 2^63 - 1)".into(),
            ));
        }
        Ok(())
    }

    /// Coordinate scaling of the prior basis.
    pub fn scaling(&self) -> CoordinateScaling {
        match self
            .problem
            .coordinate_scaling
            .unwrap_or(ScalingChoice::Auto)
        {
            ScalingChoice::Physical => CoordinateScaling::Physical,
            ScalingChoice::Normalized => CoordinateScaling::Normalized,
            ScalingChoice::Auto => match self.model() {
                ModelProblem::Darcy => CoordinateScaling::Normalized,
                ModelProblem::Source1d => CoordinateScaling::Physical,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_defaults() {
        let mut c = ExperimentConfig::from_toml_str("[problem]\nmodel = \"source1d\"\n").unwrap();
        c.resolve().unwrap();
        assert_eq!(c.eki.n_ensemble, Some(200));
        assert_eq!(c.eki.rho, Some(0.8));
        assert!((c.eki.zeta.unwrap() - 1.375).abs() < 1e-12);
        assert_eq!(c.run.n_initializations, Some(10));
        assert_eq!(c.observations.n_points, Some(50));
        // the echo round-trips
        let echoed = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(echoed, c);
    }

    #[test]
    fn rejects_bad_values_and_typos() {
        let mut c =
            ExperimentConfig::from_toml_str("[problem]\nmodel = \"darcy\"\n[eki]\nrho = 1.2\n")
                .unwrap();
        let e = c.resolve().unwrap_err().to_string();
        assert!(e.contains("rho"), "{e}");
        assert!(ExperimentConfig::from_toml_str("[eki]\nrhoo = 0.5\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[eki]\nrho = 0.5\nrho = 0.6\n").is_err());
        let mut m = ExperimentConfig::from_toml_str("[eki]\nrho = 0.5\n").unwrap();
        assert!(m.resolve().is_err());
        let mut k = ExperimentConfig::from_toml_str(
            "[problem]\nmodel = \"source1d\"\n[parameterization]\nkind = \"level-set\"\n",
        )
        .unwrap();
        assert!(k.resolve().is_err());
    }
}
