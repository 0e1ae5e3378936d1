//! Property tests for the structural invariants of the sampler, the
//! observation operators and the EKI update.

use eki_core::eki::{
    eki_step, projection_residual, run_inversion, EkiControls, Ensemble, StopReason,
};
use eki_core::forward::{
    equally_spaced_points, lattice_centers, mollified_functionals, observe, point_functionals,
    ForwardMap, LinearMap, ObservationModel,
};
use eki_core::grid::{standard_normals, white_noise, Domain, Field, Layout, SpectralBasis};
use eki_core::harness::Seeds;
use eki_core::priors::{
    apply_sqrt_cov, cauchy_increments, nonstationary_transform, unconstrained_to_hyper, MaternSpec,
    UniformBijection,
};
use eki_core::rng::stream;
use eki_core::{Exec, Result};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn domain_strategy() -> impl Strategy<Value = Domain> {
    prop_oneof![
        (0.5f64..10.0, 2usize..60).prop_map(|(l, n)| Domain::interval(l, n).unwrap()),
        (0.5f64..6.0, 0.5f64..6.0, 2usize..20, 2usize..20)
            .prop_map(|(a, b, n, m)| Domain::rectangle(a, b, n, m).unwrap()),
    ]
}

fn obs(y: Vec<f64>, gamma: f64, level: f64) -> ObservationModel {
    let m = y.len();
    ObservationModel::new(vec![], y, DMatrix::identity(m, m) * gamma, level).unwrap()
}

struct Wavy;

impl ForwardMap for Wavy {
    fn input_len(&self) -> usize {
        10
    }
    fn output_len(&self) -> usize {
        4
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((0..4)
            .map(|i| x[i] + 0.5 * x[i + 4].tanh() - 0.2 * x[(i + 7) % 10].powi(2))
            .collect())
    }
}

fn random_ensemble(seed: u64, j: usize, dim: usize) -> Ensemble {
    let mut rng = stream(seed, "members", &[]);
    Ensemble::new((0..j).map(|_| standard_normals(dim, &mut rng)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_and_round_trip(d in domain_strategy(), seed in any::<u64>()) {
        let b = SpectralBasis::new(&d);
        let c = white_noise(&d, &mut stream(seed, "xi", &[]));
        let f = b.synthesize_field(&c);
        let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((f.l2_norm() - cn).abs() <= 1e-10 * cn.max(1.0));
        for (a, e) in b.analyze(f.values()).iter().zip(&c) {
            prop_assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn sqrt_cov_is_linear(
        d in domain_strategy(),
        alpha in 1.1f64..4.0,
        tau in 0.5f64..30.0,
        a in -3.0f64..3.0,
        s in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let b = SpectralBasis::new(&d);
        let spec = MaternSpec::new(alpha.max(d.dim() as f64 / 2.0 + 0.05), tau);
        let mut rng = stream(seed, "lin", &[]);
        let x1 = white_noise(&d, &mut rng);
        let x2 = white_noise(&d, &mut rng);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + s * q).collect();
        let u1 = apply_sqrt_cov(&spec, &b, &x1).unwrap();
        let u2 = apply_sqrt_cov(&spec, &b, &x2).unwrap();
        let um = apply_sqrt_cov(&spec, &b, &mix).unwrap();
        let scale = u1.l2_norm() + u2.l2_norm() + 1e-300;
        for ((m, p), q) in um.values().iter().zip(u1.values()).zip(u2.values()) {
            prop_assert!((m - (a * p + s * q)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn observation_is_linear(a in -5.0f64..5.0, seed in any::<u64>(), mollify in any::<bool>()) {
        let d = Domain::rectangle(6.0, 6.0, 24, 24).unwrap();
        let funcs = if mollify {
            mollified_functionals(&d, &lattice_centers(&d, 4), 0.36).unwrap()
        } else {
            point_functionals(&d, &lattice_centers(&d, 5)).unwrap()
        };
        let mut rng = stream(seed, "p", &[]);
        let n = d.len(Layout::Full);
        let p = Field::new(d, Layout::Full, standard_normals(n, &mut rng)).unwrap();
        let q = Field::new(d, Layout::Full, standard_normals(n, &mut rng)).unwrap();
        let sum = Field::new(
            d,
            Layout::Full,
            p.values().iter().zip(q.values()).map(|(x, y)| a * x + y).collect(),
        )
        .unwrap();
        let (op, oq, os) = (observe(&p, &funcs), observe(&q, &funcs), observe(&sum, &funcs));
        for k in 0..funcs.len() {
            prop_assert!((os[k] - (a * op[k] + oq[k])).abs() < 1e-12 * (1.0 + a.abs()) * 10.0);
        }
    }

    #[test]
    fn one_dimensional_points_are_inside(n in 1usize..80, l in 0.5f64..20.0) {
        let d = Domain::interval(l, 100).unwrap();
        let pts = equally_spaced_points(&d, n);
        prop_assert_eq!(pts.len(), n);
        prop_assert!(pts.iter().all(|p| p[0] > 0.0 && p[0] < l));
        prop_assert!(point_functionals(&d, &pts).is_ok());
    }

    #[test]
    fn iterates_stay_in_initial_span(seed in any::<u64>(), j in 3usize..8) {
        let init = random_ensemble(seed, j, 10);
        let o = obs(vec![0.3, -0.1, 0.8, 0.2], 1e-2, 1.0);
        let ctl = EkiControls { seed, ..Default::default() };
        let mut ens = init.clone();
        for n in 0..5 {
            ens = eki_step(&ens, &Wavy, &o, &ctl, n).unwrap().ensemble;
            for m in ens.members() {
                prop_assert!(projection_residual(init.members(), m) < 1e-8);
            }
        }
    }

    #[test]
    fn update_commutes_with_coordinate_permutations(
        seed in any::<u64>(),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let mut rng = stream(seed, "a", &[]);
        let a = DMatrix::from_vec(3, 6, standard_normals(18, &mut rng));
        let pa = DMatrix::from_fn(3, 6, |i, k| a[(i, perm[k])]);
        let init = random_ensemble(seed, 8, 6);
        let pinit = Ensemble::new(
            init.members().iter().map(|u| perm.iter().map(|&p| u[p]).collect()).collect(),
        )
        .unwrap();
        let o = obs(vec![0.1, -0.4, 0.7], 1e-2, 1.0);
        let ctl = EkiControls { seed, ..Default::default() };
        let s1 = eki_step(&init, &LinearMap::new(a), &o, &ctl, 1).unwrap();
        let s2 = eki_step(&pinit, &LinearMap::new(pa), &o, &ctl, 1).unwrap();
        for (u, v) in s1.ensemble.members().iter().zip(s2.ensemble.members()) {
            for (k, &p) in perm.iter().enumerate() {
                prop_assert!((v[k] - u[p]).abs() <= 1e-11 * (1.0 + u[p].abs()));
            }
        }
    }

    #[test]
    fn discrepancy_stop_meets_threshold(seed in any::<u64>(), level in 0.05f64..2.0) {
        let mut rng = stream(seed, "lin", &[]);
        let a = DMatrix::from_vec(4, 6, standard_normals(24, &mut rng));
        let g = LinearMap::new(a);
        let truth = standard_normals(6, &mut rng);
        let y = g.eval(&truth).unwrap();
        let o = obs(y, 1e-2, level);
        let ctl = EkiControls { seed, max_iter: 40, ..Default::default() };
        let r = run_inversion(random_ensemble(seed, 12, 6), &g, &o, &ctl, &mut ()).unwrap();
        if r.stop == StopReason::Discrepancy {
            prop_assert!(r.final_misfit().unwrap() <= ctl.zeta * level);
        } else {
            prop_assert!(r.final_misfit().unwrap() > ctl.zeta * level);
        }
    }

    #[test]
    fn execution_mode_does_not_change_the_update(seed in any::<u64>()) {
        let init = random_ensemble(seed, 9, 10);
        let o = obs(vec![0.3, -0.1, 0.8, 0.2], 1e-3, 1.0);
        let seq = EkiControls { seed, exec: Exec::Sequential, ..Default::default() };
        let par = EkiControls { seed, exec: Exec::default(), ..Default::default() };
        let a = eki_step(&init, &Wavy, &o, &seq, 3).unwrap();
        let b = eki_step(&init, &Wavy, &o, &par, 3).unwrap();
        prop_assert_eq!(a.ensemble, b.ensemble);
        prop_assert_eq!(a.upsilon.to_bits(), b.upsilon.to_bits());
    }

    #[test]
    fn initialization_seeds_are_distinct(master in any::<u64>()) {
        let s = Seeds::new(master);
        let mut all: Vec<u64> = (0..32).map(|i| s.initialization(i)).collect();
        all.extend([s.truth, s.noise, s.baseline]);
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(Seeds::new(master).initialization(5), s.initialization(5));
    }
}

#[test]
fn bijection_pushes_standard_normal_to_uniform() {
    let (lo, hi) = (1.3, 4.0);
    let b = UniformBijection::new(lo, hi).unwrap();
    let n = 100_000;
    let mut x: Vec<f64> = standard_normals(n, &mut stream(11, "ks", &[]))
        .into_iter()
        .map(|z| unconstrained_to_hyper(z, &b))
        .collect();
    x.sort_by(f64::total_cmp);
    let d = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = (v - lo) / (hi - lo);
            (f - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov critical value at level 0.01
    assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    let back = unconstrained_to_hyper(0.0, &b);
    assert!((back - 2.65).abs() < 1e-12);
}

#[test]
fn cauchy_increments_have_heavy_tails() {
    let delta = 0.3;
    let n = 100_000;
    let x = cauchy_increments(n, delta, &mut stream(12, "tail", &[])).unwrap();
    let frac = x.iter().filter(|v| v.abs() > 10.0 * delta).count() as f64 / n as f64;
    let p = 2.0 * 0.1f64.atan() / std::f64::consts::PI;
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((frac - p).abs() < 4.0 * sd, "{frac} vs {p}");
}

#[test]
fn constant_length_scale_matches_stationary_mode_variances() {
    // with ℓ ≡ ℓ₀ and α = 2 the nonstationary draw equals the stationary
    // τ = 1/ℓ₀ draw times ℓ₀^{d/2 − α}, so normalized mode variances agree
    let d = Domain::interval(1.0, 200).unwrap();
    let b = SpectralBasis::new(&d);
    let l0: f64 = 0.1;
    let ell = Field::constant(d, Layout::Interior, l0);
    let spec = MaternSpec::new(2.0, 1.0 / l0);
    let scale = l0.powf(0.5 - 2.0);
    let n = 10_000;
    let modes = 20;
    let mut var = vec![0.0; modes];
    let mut rng = stream(13, "ns", &[]);
    for _ in 0..n {
        let xi = white_noise(&d, &mut rng);
        let u = nonstationary_transform(2, &ell, &xi, &b).unwrap();
        let c = b.analyze(u.values());
        for (v, ck) in var.iter_mut().zip(&c) {
            *v += (ck / scale).powi(2) / n as f64;
        }
    }
    // the solve uses the discrete Laplacian, so compare against its spectrum
    let tol = 5.0 * (2.0 / n as f64).sqrt();
    for (k, v) in var.iter().enumerate() {
        let want = spec.mode_variance(b.discrete_eigenvalue(k));
        assert!((v / want - 1.0).abs() < tol, "mode {k}: {v} vs {want}");
    }
}
