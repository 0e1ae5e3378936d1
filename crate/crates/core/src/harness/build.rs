//! Turns a resolved configuration into the forward model, the truth and the
//! synthetic data.

use nalgebra::DMatrix;

use super::config::{
    ExperimentConfig, GChoice, Hierarchy, ModelProblem, ParamKind, PlainLengthScale, SolverChoice,
    TruthKind,
};
use crate::error::{Error, Result};
use crate::forward::{
    equally_spaced_points, lattice_centers, mollified_functionals, point_functionals,
    synthesize_data, CoefficientMap, DarcyProblem, FieldParam, ForwardModel, Functional,
    LinearSolver, ObservationModel, Parameterization, Physics, SourceProblem1D,
};
use crate::grid::{white_noise, Domain, Field, Layout, SpectralBasis};
use crate::param_maps::{
    channel_map, exp_map, level_set_map, ChannelGeometry, ChannelSpec, HierarchyPrior,
    LevelSetSpec, NoncenteredTransform,
};
use crate::priors::{apply_sqrt_cov, GMap, MaternSpec, UniformBijection};
use crate::rng::{derive_seed, stream};

/// Seeds derived from the master seed; every random quantity of a run is
/// drawn from one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub master: u64,
    pub truth: u64,
    pub noise: u64,
    /// Fixed length-scale draw of the non-hierarchical 1D prior.
    pub baseline: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Seeds {
            master,
            truth: derive_seed(master, "truth", &[]),
            baseline: derive_seed(master, "baseline-length-scale", &[]),
            noise: derive_seed(master, "noise", &[]),
        }
    }

    pub fn initialization(&self, i: usize) -> u64 {
        derive_seed(self.master, "initialization", &[i as u64])
    }

    pub fn perturbation(init_seed: u64) -> u64 {
        derive_seed(init_seed, "perturb", &[])
    }
}

#[derive(Debug, Clone)]
pub struct Truth {
    /// The field errors are measured against (`u†` or `log κ†`).
    pub field: Field,
    /// PDE coefficient fed to the physics.
    pub coefficient: Field,
    pub hypers: Vec<(String, f64)>,
}

/// Everything needed to run inversions for one configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub domain: Domain,
    pub model: ForwardModel,
    pub truth: Truth,
    pub obs: ObservationModel,
}

pub fn build_domain(config: &ExperimentConfig) -> Result<Domain> {
    let n = config.problem.n_cells.unwrap();
    let l = config.problem.extent.unwrap();
    match config.model() {
        ModelProblem::Darcy => Domain::rectangle(l, l, n, n),
        ModelProblem::Source1d => Domain::interval(l, n),
    }
}

fn bijection(b: [f64; 2]) -> Result<UniformBijection> {
    UniformBijection::new(b[0], b[1])
}

fn scalar_prior(alpha: [f64; 2], tau: [f64; 2], mean: f64) -> Result<HierarchyPrior> {
    Ok(HierarchyPrior::ScalarMatern {
        alpha: bijection(alpha)?,
        tau: bijection(tau)?,
        mean,
    })
}

fn g_map(config: &ExperimentConfig) -> GMap {
    let p = &config.prior;
    let (floor, cap) = (p.ell_floor.unwrap(), p.ell_cap.unwrap());
    match p.g.unwrap() {
        GChoice::Exp => GMap::exp(floor, cap),
        GChoice::Rational => GMap::rational(
            p.g_a.unwrap(),
            p.g_b.unwrap(),
            p.g_c.unwrap(),
            p.g_d.unwrap(),
            floor,
            cap,
        ),
    }
}

fn plain(transform: NoncenteredTransform, alpha: f64, tau: f64) -> Result<FieldParam> {
    let theta = match transform.prior() {
        HierarchyPrior::ScalarMatern {
            alpha: ab, tau: tb, ..
        } => vec![
            ab.to_unconstrained(alpha)
                .map_err(|e| fixed_outside("alpha", e))?,
            tb.to_unconstrained(tau)
                .map_err(|e| fixed_outside("tau", e))?,
        ],
        _ => unreachable!("plain fields use a scalar prior"),
    };
    Ok(FieldParam::Plain {
        sampler: transform,
        theta,
    })
}

fn fixed_outside(name: &str, e: Error) -> Error {
    Error::Config(format!(
        "fixed {name} must lie inside its prior bounds ({e})"
    ))
}

fn wrap(
    transform: NoncenteredTransform,
    hierarchy: Hierarchy,
    alpha: f64,
    tau: f64,
) -> Result<FieldParam> {
    match hierarchy {
        Hierarchy::None => plain(transform, alpha, tau),
        Hierarchy::Centered => Ok(FieldParam::Centered(transform)),
        Hierarchy::Noncentered => Ok(FieldParam::Noncentered(transform)),
    }
}

fn gauss_field_prior(config: &ExperimentConfig) -> HierarchyPrior {
    let p = &config.prior;
    let v_prior = MaternSpec::new(p.v_alpha.unwrap(), p.v_tau.unwrap())
        .with_amplitude(p.v_amplitude.unwrap())
        .with_mean(p.v_mean.unwrap());
    HierarchyPrior::LengthScaleGauss {
        alpha: p.ns_alpha.unwrap(),
        v_prior,
        g: g_map(config),
    }
}

/// The parameterization and coefficient map selected by the config.
/// `seeds.baseline` fixes the length-scale draw of a field-draw baseline.
pub fn build_parameterization(
    config: &ExperimentConfig,
    basis: &SpectralBasis,
    seeds: &Seeds,
) -> Result<(Parameterization, CoefficientMap)> {
    let p = &config.prior;
    let scalar = || {
        scalar_prior(
            p.alpha_bounds.unwrap(),
            p.tau_bounds.unwrap(),
            p.mean.unwrap(),
        )
    };
    let transform = |prior| NoncenteredTransform::new(basis.clone(), prior);
    let fixed = (p.alpha.unwrap(), p.tau.unwrap());
    let hierarchy = config.parameterization.hierarchy.unwrap();
    let darcy_map = CoefficientMap::Exp;
    let field_map = match config.model() {
        ModelProblem::Darcy => darcy_map,
        ModelProblem::Source1d => CoefficientMap::Identity,
    };
    Ok(match config.kind() {
        ParamKind::Plain if p.plain_length_scale == Some(PlainLengthScale::FieldDraw) => {
            let t = transform(gauss_field_prior(config))?;
            let zeta = white_noise(basis.domain(), &mut stream(seeds.baseline, "zeta", &[]));
            (
                Parameterization::Single(FieldParam::Plain {
                    sampler: t,
                    theta: zeta,
                }),
                field_map,
            )
        }
        ParamKind::Plain => (
            Parameterization::Single(plain(transform(scalar()?)?, fixed.0, fixed.1)?),
            field_map,
        ),
        ParamKind::CenteredHier => (
            Parameterization::Single(FieldParam::Centered(transform(scalar()?)?)),
            field_map,
        ),
        ParamKind::NoncenteredHier => (
            Parameterization::Single(FieldParam::Noncentered(transform(scalar()?)?)),
            field_map,
        ),
        ParamKind::NoncenteredFieldGauss => (
            Parameterization::Single(FieldParam::Noncentered(transform(gauss_field_prior(
                config,
            ))?)),
            field_map,
        ),
        ParamKind::NoncenteredFieldCauchy => {
            let prior = HierarchyPrior::LengthScaleCauchy {
                alpha: p.ns_alpha.unwrap(),
                delta: p.cauchy_delta.unwrap(),
                g: g_map(config),
                interp: p.cauchy_interp.unwrap(),
            };
            (
                Parameterization::Single(FieldParam::Noncentered(transform(prior)?)),
                field_map,
            )
        }
        ParamKind::LevelSet => {
            let ls = LevelSetSpec::new(
                config.level_set.kappa_minus.unwrap(),
                config.level_set.kappa_plus.unwrap(),
            )?;
            (
                Parameterization::Single(wrap(transform(scalar()?)?, hierarchy, fixed.0, fixed.1)?),
                CoefficientMap::LevelSet(ls),
            )
        }
        ParamKind::Channel => {
            let c = &config.channel;
            let bounds = [
                c.d1_bounds.unwrap(),
                c.d2_bounds.unwrap(),
                c.d3_bounds.unwrap(),
                c.d4_bounds.unwrap(),
                c.d5_bounds.unwrap(),
            ];
            let mut geometry = [UniformBijection { lo: 0.0, hi: 1.0 }; 5];
            for (g, b) in geometry.iter_mut().zip(bounds) {
                *g = bijection(b)?;
            }
            let (ab, tb) = (c.alpha_bounds.unwrap(), c.tau_bounds.unwrap());
            let h = c.fixed_hypers.unwrap();
            let outside = wrap(
                transform(scalar_prior(ab, tb, c.mean_outside.unwrap())?)?,
                hierarchy,
                h[0],
                h[1],
            )?;
            let inside = wrap(
                transform(scalar_prior(ab, tb, c.mean_inside.unwrap())?)?,
                hierarchy,
                h[2],
                h[3],
            )?;
            (
                Parameterization::Channel {
                    geometry,
                    outside,
                    inside,
                },
                CoefficientMap::Exp,
            )
        }
    })
}

/// Observation functionals of the configured model problem.
pub fn build_functionals(config: &ExperimentConfig, domain: &Domain) -> Result<Vec<Functional>> {
    let o = &config.observations;
    match config.model() {
        ModelProblem::Darcy => {
            let centers = lattice_centers(domain, o.lattice.unwrap());
            mollified_functionals(domain, &centers, o.sigma_frac.unwrap() * domain.extent(0))
        }
        ModelProblem::Source1d => {
            point_functionals(domain, &equally_spaced_points(domain, o.n_points.unwrap()))
        }
    }
}

pub fn build_physics(
    config: &ExperimentConfig,
    domain: &Domain,
    functionals: Vec<Functional>,
) -> Result<Physics> {
    match config.model() {
        ModelProblem::Darcy => {
            let solver = match config.problem.solver.unwrap() {
                SolverChoice::Direct => LinearSolver::Direct,
                SolverChoice::Cg => LinearSolver::Cg {
                    rel_tol: config.problem.cg_tol.unwrap(),
                    max_iter: 20 * domain.len(Layout::Full),
                },
            };
            let problem = DarcyProblem::benchmark(*domain)?.with_solver(solver);
            Ok(Physics::darcy(problem, functionals))
        }
        ModelProblem::Source1d => Ok(Physics::source(
            &SourceProblem1D::new(*domain)?,
            &functionals,
        )),
    }
}

/// Closed-form profile with a smooth bump on `(0, 5)` and a step on `[7, 9]`.
pub fn step_truth(x: f64) -> f64 {
    if x > 0.0 && x < 5.0 {
        (4.0 - 25.0 / (x * (5.0 - x))).exp()
    } else if (7.0..=8.0).contains(&x) {
        1.0
    } else if x > 8.0 && x <= 9.0 {
        -1.0
    } else {
        0.0
    }
}

/// Deterministic truth for the configured experiment.
pub fn make_truth(config: &ExperimentConfig, basis: &SpectralBasis, seed: u64) -> Result<Truth> {
    let domain = *basis.domain();
    let t = &config.truth;
    match (config.model(), t.kind.unwrap()) {
        (ModelProblem::Source1d, TruthKind::Step) => {
            let u = Field::from_fn(domain, Layout::Interior, |x| step_truth(x[0]));
            Ok(Truth {
                field: u.clone(),
                coefficient: u,
                hypers: vec![],
            })
        }
        (_, TruthKind::PriorDraw) if config.kind() == ParamKind::Channel => {
            let c = &config.channel;
            let h = t.channel_hypers.unwrap();
            let geometry = ChannelGeometry::from_array(t.channel_geometry.unwrap());
            geometry.validate()?;
            let mut rng = stream(seed, "truth-xi", &[]);
            let xi1 = white_noise(&domain, &mut rng);
            let xi2 = white_noise(&domain, &mut rng);
            let (m1, m2) = (c.mean_outside.unwrap(), c.mean_inside.unwrap());
            let outside = apply_sqrt_cov(&MaternSpec::new(h[0], h[2]).with_mean(m1), basis, &xi1)?;
            let inside = apply_sqrt_cov(&MaternSpec::new(h[1], h[3]).with_mean(m2), basis, &xi2)?;
            let spec = ChannelSpec {
                geometry,
                log_kappa_outside: outside.to_full(m1),
                log_kappa_inside: inside.to_full(m2),
            };
            let log_kappa = channel_map(&spec, &domain)?;
            let mut hypers: Vec<(String, f64)> = t
                .channel_geometry
                .unwrap()
                .iter()
                .enumerate()
                .map(|(k, &d)| (format!("d{}", k + 1), d))
                .collect();
            hypers.extend([
                ("alpha1".to_string(), h[0]),
                ("tau1".to_string(), h[2]),
                ("alpha2".to_string(), h[1]),
                ("tau2".to_string(), h[3]),
            ]);
            Ok(Truth {
                coefficient: exp_map(&log_kappa)?,
                field: log_kappa,
                hypers,
            })
        }
        (_, TruthKind::PriorDraw) => {
            let (alpha, tau) = (t.alpha.unwrap(), t.tau.unwrap());
            let mean = config.prior.mean.unwrap();
            let mut rng = stream(seed, "truth-xi", &[]);
            let xi = white_noise(&domain, &mut rng);
            let u = apply_sqrt_cov(&MaternSpec::new(alpha, tau).with_mean(mean), basis, &xi)?;
            let hypers = vec![("alpha".to_string(), alpha), ("tau".to_string(), tau)];
            match config.model() {
                ModelProblem::Source1d => Ok(Truth {
                    field: u.clone(),
                    coefficient: u,
                    hypers,
                }),
                ModelProblem::Darcy => {
                    let full = u.to_full(mean);
                    let coefficient = match config.kind() {
                        ParamKind::LevelSet => level_set_map(
                            &full,
                            &LevelSetSpec::new(
                                config.level_set.kappa_minus.unwrap(),
                                config.level_set.kappa_plus.unwrap(),
                            )?,
                        ),
                        _ => exp_map(&full)?,
                    };
                    Ok(Truth {
                        field: coefficient.map(f64::ln),
                        coefficient,
                        hypers,
                    })
                }
            }
        }
        (ModelProblem::Darcy, TruthKind::Step) => Err(Error::Config(
            "truth.kind = step is defined for source1d only".into(),
        )),
    }
}

impl Experiment {
    /// Builds the model, truth and synthetic data. `config` must be resolved.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let seeds = Seeds::new(config.run.seed.unwrap());
        let domain = build_domain(config)?;
        let basis = SpectralBasis::with_scaling(&domain, config.scaling());
        let (param, coefficient) = build_parameterization(config, &basis, &seeds)?;
        let functionals = build_functionals(config, &domain)?;
        let physics = build_physics(config, &domain, functionals.clone())?;
        let model = ForwardModel::new(param, coefficient, physics)?;
        let truth = make_truth(config, &basis, seeds.truth)?;
        let clean = model.physics.apply(&truth.coefficient)?;
        let m = clean.len();
        let gamma = DMatrix::identity(m, m) * config.observations.gamma.unwrap();
        let noise = config
            .observations
            .noise
            .unwrap()
            .then(|| config.observations.noise_level.unwrap());
        let obs = synthesize_data(clean, functionals, gamma, seeds.noise, noise)?;
        Ok(Experiment {
            config: config.clone(),
            seeds,
            domain,
            model,
            truth,
            obs,
        })
    }
}
