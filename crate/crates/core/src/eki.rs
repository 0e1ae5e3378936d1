//! Regularizing iterative ensemble Kalman inversion.
//!
//! The update `u_j ← u_j + C^{uw}(C^{ww} + ΥΓ)^{-1}(y_j − G(u_j))` is applied
//! in its factored form `u_j ← u_j + Σ_m a_{mj}(u_m − ū)` with
//! `a_{mj} = ⟨w_m − w̄, x_j⟩ / (J − 1)`. Each coordinate of the state is
//! updated independently of every other coordinate, so the result does not
//! depend on how blocks are packed.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::forward::{ForwardMap, ObservationModel};
use crate::grid::standard_normals;
use crate::rng::member_stream;

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Vec<f64>>,
}

impl Ensemble {
    pub fn new(members: Vec<Vec<f64>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::param("ensemble", "need at least two members"));
        }
        let d = members[0].len();
        if let Some(m) = members.iter().find(|m| m.len() != d) {
            return Err(Error::DimensionMismatch {
                context: "ensemble member",
                expected: d,
                found: m.len(),
            });
        }
        for (j, m) in members.iter().enumerate() {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("ensemble member {j}")));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].len()
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    pub fn member(&self, j: usize) -> &[f64] {
        &self.members[j]
    }

    pub fn into_members(self) -> Vec<Vec<f64>> {
        self.members
    }

    pub fn mean(&self) -> Vec<f64> {
        mean_of(&self.members)
    }

    /// Evaluates `G` on every member.
    pub fn evaluate(&self, forward: &dyn ForwardMap, exec: Exec) -> Result<Vec<Vec<f64>>> {
        let out = exec.try_map(self.len(), |j| forward.eval(&self.members[j]))?;
        for (j, w) in out.iter().enumerate() {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("forward output of member {j}")));
            }
        }
        Ok(out)
    }
}

fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpsilonMode {
    /// One `Υ_n` from the unperturbed mean residual `y − w̄`.
    #[default]
    Shared,
    /// One `Υ` per member from its own residual `y_j − w̄`.
    PerMember,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpsilonRule {
    /// `Υ = 2^i Υ⁰` for the first `i` passing the discrepancy-type test.
    Doubling,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkiControls {
    pub rho: f64,
    pub zeta: f64,
    pub upsilon0: f64,
    pub max_iter: usize,
    pub max_doublings: usize,
    pub perturb: bool,
    pub upsilon_mode: UpsilonMode,
    pub rule: UpsilonRule,
    /// Master seed of the observation perturbations.
    pub seed: u64,
    pub exec: Exec,
    pub record_wall_time: bool,
}

impl Default for EkiControls {
    fn default() -> Self {
        EkiControls {
            rho: 0.8,
            zeta: 1.1 / 0.8,
            upsilon0: 1.0,
            max_iter: 30,
            max_doublings: 60,
            perturb: true,
            upsilon_mode: UpsilonMode::Shared,
            rule: UpsilonRule::Doubling,
            seed: 0,
            exec: Exec::default(),
            record_wall_time: false,
        }
    }
}

impl EkiControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param(
                "rho",
                format!("{} is not in (0, 1)", self.rho),
            ));
        }
        if !(self.zeta * self.rho > 1.0) {
            return Err(Error::param(
                "zeta",
                format!("{} must exceed 1/rho", self.zeta),
            ));
        }
        if !(self.upsilon0 > 0.0) {
            return Err(Error::param("upsilon0", "must be positive"));
        }
        if let UpsilonRule::Fixed(v) = self.rule {
            if !(v > 0.0) {
                return Err(Error::param("upsilon", "fixed value must be positive"));
            }
        }
        Ok(())
    }
}

/// `(C^{uw}, C^{ww})` with `1/(J−1)` normalization.
pub fn empirical_covariances(
    states: &[Vec<f64>],
    outputs: &[Vec<f64>],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = states.len();
    let (ub, wb) = (mean_of(states), mean_of(outputs));
    let (d, m) = (ub.len(), wb.len());
    let du = DMatrix::from_fn(d, j, |k, i| states[i][k] - ub[k]);
    let dw = DMatrix::from_fn(m, j, |k, i| outputs[i][k] - wb[k]);
    let s = 1.0 / (j as f64 - 1.0);
    (&du * dw.transpose() * s, &dw * dw.transpose() * s)
}

/// Output covariance only.
pub fn output_covariance(outputs: &[Vec<f64>]) -> DMatrix<f64> {
    let j = outputs.len();
    let wb = mean_of(outputs);
    let dw = DMatrix::from_fn(wb.len(), j, |k, i| outputs[i][k] - wb[k]);
    &dw * dw.transpose() / (j as f64 - 1.0)
}

/// Cholesky of `C + ΥΓ`, retrying once with jitter `10⁻¹² tr/m`.
fn factor_regularized(
    c_ww: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    upsilon: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let m = c_ww + gamma * upsilon;
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch);
    }
    let n = m.nrows();
    let jitter = 1e-12 * m.trace() / n as f64;
    (m + DMatrix::identity(n, n) * jitter)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("C_ww + {upsilon} Γ")))
}

fn upsilon_test(
    obs: &ObservationModel,
    ch: &Cholesky<f64, Dyn>,
    r: &DVector<f64>,
    upsilon: f64,
    rho: f64,
) -> bool {
    let lhs = rho * DVector::from_vec(obs.whiten(r.as_slice())).norm();
    let x = ch.solve(r);
    let rhs = upsilon * (obs.gamma_sqrt().transpose() * x).norm();
    lhs <= rhs
}

/// First `Υ = 2^i Υ⁰` with `ρ‖Γ^{-1/2}r‖ ≤ Υ‖Γ^{1/2}(C^{ww} + ΥΓ)^{-1}r‖`.
pub fn select_upsilon(
    c_ww: &DMatrix<f64>,
    obs: &ObservationModel,
    residual: &[f64],
    controls: &EkiControls,
) -> Result<f64> {
    let r = DVector::from_column_slice(residual);
    let mut ups = controls.upsilon0;
    for _ in 0..=controls.max_doublings {
        let ch = factor_regularized(c_ww, obs.gamma(), ups)?;
        if upsilon_test(obs, &ch, &r, ups, controls.rho) {
            return Ok(ups);
        }
        ups *= 2.0;
    }
    Err(Error::UpsilonSearchExhausted(controls.max_doublings))
}

/// Result of one analysis step.
#[derive(Debug, Clone)]
pub struct Step {
    pub ensemble: Ensemble,
    /// The shared `Υ_n`, or the mean over members in per-member mode.
    pub upsilon: f64,
}

/// Perturbed data `y + η_j` for member `j` at iteration `n`, drawn from a
/// counter-addressed stream.
pub fn perturbed_data(
    obs: &ObservationModel,
    seed: u64,
    iteration: usize,
    member: usize,
) -> Vec<f64> {
    let mut rng = member_stream(seed, "data-perturbation", iteration as u64, member);
    let z = DVector::from_vec(standard_normals(obs.dim(), &mut rng));
    let eta = obs.gamma_sqrt() * z;
    obs.y.iter().zip(eta.iter()).map(|(a, b)| a + b).collect()
}

/// The analysis step given precomputed forward outputs.
pub fn analysis_step(
    ensemble: &Ensemble,
    outputs: &[Vec<f64>],
    obs: &ObservationModel,
    controls: &EkiControls,
    iteration: usize,
) -> Result<Step> {
    let j = ensemble.len();
    if outputs.len() != j {
        return Err(Error::DimensionMismatch {
            context: "forward outputs",
            expected: j,
            found: outputs.len(),
        });
    }
    let m = obs.dim();
    let wb = mean_of(outputs);
    let c_ww = output_covariance(outputs);

    let targets: Vec<Vec<f64>> = if controls.perturb {
        controls
            .exec
            .map(j, |i| perturbed_data(obs, controls.seed, iteration, i))
    } else {
        vec![obs.y.clone(); j]
    };

    // x_j = (C + ΥΓ)^{-1}(y_j − w_j)
    let (xs, upsilon): (Vec<DVector<f64>>, f64) = match (controls.rule, controls.upsilon_mode) {
        (UpsilonRule::Fixed(_), _) | (UpsilonRule::Doubling, UpsilonMode::Shared) => {
            let u = match controls.rule {
                UpsilonRule::Fixed(u) => u,
                UpsilonRule::Doubling => {
                    let r: Vec<f64> = obs.y.iter().zip(&wb).map(|(a, b)| a - b).collect();
                    select_upsilon(&c_ww, obs, &r, controls)?
                }
            };
            let ch = factor_regularized(&c_ww, obs.gamma(), u)?;
            let xs = controls.exec.map(j, |i| {
                let r = DVector::from_iterator(
                    m,
                    targets[i].iter().zip(&outputs[i]).map(|(a, b)| a - b),
                );
                ch.solve(&r)
            });
            (xs, u)
        }
        (UpsilonRule::Doubling, UpsilonMode::PerMember) => {
            let per = controls.exec.try_map(j, |i| {
                let r: Vec<f64> = targets[i].iter().zip(&wb).map(|(a, b)| a - b).collect();
                let u = select_upsilon(&c_ww, obs, &r, controls)?;
                let ch = factor_regularized(&c_ww, obs.gamma(), u)?;
                let d = DVector::from_iterator(
                    m,
                    targets[i].iter().zip(&outputs[i]).map(|(a, b)| a - b),
                );
                Ok::<_, Error>((ch.solve(&d), u))
            })?;
            let mean_u = per.iter().map(|p| p.1).sum::<f64>() / j as f64;
            (per.into_iter().map(|p| p.0).collect(), mean_u)
        }
    };

    // a[m][j] = ⟨w_m − w̄, x_j⟩ / (J − 1)
    let dw: Vec<Vec<f64>> = outputs
        .iter()
        .map(|w| w.iter().zip(&wb).map(|(a, b)| a - b).collect())
        .collect();
    let s = 1.0 / (j as f64 - 1.0);
    let coeffs: Vec<Vec<f64>> = controls.exec.map(j, |jj| {
        dw.iter()
            .map(|d| d.iter().zip(xs[jj].iter()).map(|(a, b)| a * b).sum::<f64>() * s)
            .collect()
    });

    let ub = ensemble.mean();
    let du: Vec<Vec<f64>> = ensemble
        .members()
        .iter()
        .map(|u| u.iter().zip(&ub).map(|(a, b)| a - b).collect())
        .collect();
    let members = controls.exec.map(j, |jj| {
        let mut u = ensemble.member(jj).to_vec();
        for (a, d) in coeffs[jj].iter().zip(&du) {
            for (uk, dk) in u.iter_mut().zip(d) {
                *uk += a * dk;
            }
        }
        u
    });
    Ok(Step {
        ensemble: Ensemble::new(members)?,
        upsilon,
    })
}

/// One full iteration: evaluate `G` on the ensemble, then update.
pub fn eki_step(
    ensemble: &Ensemble,
    forward: &dyn ForwardMap,
    obs: &ObservationModel,
    controls: &EkiControls,
    iteration: usize,
) -> Result<Step> {
    let outputs = ensemble.evaluate(forward, controls.exec)?;
    analysis_step(ensemble, &outputs, obs, controls, iteration)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖Γ^{-1/2}(y − w̄_n)‖`
    pub misfit: f64,
    pub rel_error: Option<f64>,
    /// `Υ_n` used to step from `n` to `n + 1`.
    pub upsilon: Option<f64>,
    /// Ensemble means of decoded hyperparameters.
    pub hypers: Vec<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Discrepancy,
    MaxIterations,
    Aborted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Discrepancy => "discrepancy",
            StopReason::MaxIterations => "max-iterations",
            StopReason::Aborted => "aborted",
        }
    }
}

/// Hook called once per iterate, before the stopping test.
pub trait Monitor {
    fn observe(
        &mut self,
        _ensemble: &Ensemble,
        _outputs: &[Vec<f64>],
        _record: &mut IterationRecord,
    ) -> Result<()> {
        Ok(())
    }
}

impl Monitor for () {}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub ensemble: Ensemble,
    /// Forward outputs of the final ensemble (empty if aborted before any).
    pub outputs: Vec<Vec<f64>>,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub diagnostic: Option<String>,
}

impl Inversion {
    pub fn final_misfit(&self) -> Option<f64> {
        self.records.last().map(|r| r.misfit)
    }
}

/// Iterates until `‖Γ^{-1/2}(y − w̄_n)‖ ≤ ζ · noise_level` or the iteration
/// budget runs out. Numerical failures end the run with
/// [`StopReason::Aborted`] and a diagnostic instead of an error.
pub fn run_inversion(
    initial: Ensemble,
    forward: &dyn ForwardMap,
    obs: &ObservationModel,
    controls: &EkiControls,
    monitor: &mut dyn Monitor,
) -> Result<Inversion> {
    controls.validate()?;
    if initial.dim() != forward.input_len() || forward.output_len() != obs.dim() {
        return Err(Error::DimensionMismatch {
            context: "inversion setup",
            expected: forward.input_len(),
            found: initial.dim(),
        });
    }
    let start = Instant::now();
    let threshold = controls.zeta * obs.noise_level;
    let mut ensemble = initial;
    let mut records = Vec::new();
    let mut last_outputs = Vec::new();
    let abort = |ensemble: Ensemble, outputs, records, e: Error| Inversion {
        ensemble,
        outputs,
        records,
        stop: StopReason::Aborted,
        diagnostic: Some(e.to_string()),
    };
    for n in 0..=controls.max_iter {
        let outputs = match ensemble.evaluate(forward, controls.exec) {
            Ok(o) => o,
            Err(e) => return Ok(abort(ensemble, last_outputs, records, e)),
        };
        let mut rec = IterationRecord {
            iter: n,
            misfit: obs.misfit(&mean_of(&outputs)),
            ..Default::default()
        };
        monitor.observe(&ensemble, &outputs, &mut rec)?;
        let stop = if rec.misfit <= threshold {
            Some(StopReason::Discrepancy)
        } else if n == controls.max_iter {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(stop) = stop {
            if controls.record_wall_time {
                rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            records.push(rec);
            return Ok(Inversion {
                ensemble,
                outputs,
                records,
                stop,
                diagnostic: None,
            });
        }
        match analysis_step(&ensemble, &outputs, obs, controls, n) {
            Ok(step) => {
                rec.upsilon = Some(step.upsilon);
                if controls.record_wall_time {
                    rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                }
                records.push(rec);
                ensemble = step.ensemble;
                last_outputs = outputs;
            }
            Err(e) => {
                records.push(rec);
                return Ok(abort(ensemble, outputs, records, e));
            }
        }
    }
    unreachable!("loop returns at n = max_iter")
}

fn limit_rhs(
    states: &[Vec<f64>],
    forward: &dyn ForwardMap,
    obs: &ObservationModel,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    let j = states.len();
    let outputs = exec.try_map(j, |i| forward.eval(&states[i]))?;
    let wb = mean_of(&outputs);
    let gamma_inv = obs
        .gamma()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("noise covariance".into()))?;
    let ub = mean_of(states);
    // d[j][m] = ⟨Γ^{-1}(G_j − y), G_m − Ḡ⟩
    let scaled: Vec<DVector<f64>> = outputs
        .iter()
        .map(|w| {
            gamma_inv.solve(&DVector::from_iterator(
                w.len(),
                w.iter().zip(&obs.y).map(|(a, b)| a - b),
            ))
        })
        .collect();
    Ok(exec.map(j, |jj| {
        let mut du = vec![0.0; ub.len()];
        for (m, w) in outputs.iter().enumerate() {
            let d: f64 = scaled[jj]
                .iter()
                .zip(w.iter().zip(&wb))
                .map(|(s, (a, b))| s * (a - b))
                .sum();
            for (o, (u, b)) in du.iter_mut().zip(states[m].iter().zip(&ub)) {
                *o -= d * (u - b);
            }
        }
        du
    }))
}

/// RK4 integration of `u̇_j = −Σ_m d^{(j,m)} u_m` up to time `t_end`;
/// returns the states at `t = 0, h, 2h, …`.
pub fn integrate_limit_ode(
    initial: &Ensemble,
    forward: &dyn ForwardMap,
    obs: &ObservationModel,
    h: f64,
    t_end: f64,
    exec: Exec,
) -> Result<Vec<Ensemble>> {
    if !(h > 0.0) {
        return Err(Error::param("h", "step must be positive"));
    }
    let steps = (t_end / h).round() as usize;
    let axpy = |a: &[Vec<f64>], s: f64, b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + s * q).collect())
            .collect()
    };
    let mut traj = vec![initial.clone()];
    let mut u = initial.members().to_vec();
    for _ in 0..steps {
        let k1 = limit_rhs(&u, forward, obs, exec)?;
        let k2 = limit_rhs(&axpy(&u, 0.5 * h, &k1), forward, obs, exec)?;
        let k3 = limit_rhs(&axpy(&u, 0.5 * h, &k2), forward, obs, exec)?;
        let k4 = limit_rhs(&axpy(&u, h, &k3), forward, obs, exec)?;
        for (i, ui) in u.iter_mut().enumerate() {
            for k in 0..ui.len() {
                ui[k] += h / 6.0 * (k1[i][k] + 2.0 * k2[i][k] + 2.0 * k3[i][k] + k4[i][k]);
            }
        }
        if u.iter().flatten().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return Err(Error::NonFinite("limit ODE blew up".into()));
        }
        traj.push(Ensemble::new(u.clone())?);
    }
    Ok(traj)
}

/// Relative residual of projecting `v` onto the span of `basis` (least
/// squares through an SVD).
pub fn projection_residual(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let a = DMatrix::from_fn(v.len(), basis.len(), |i, j| basis[j][i]);
    let b = DVector::from_column_slice(v);
    let svd = a.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * v.len().max(basis.len()) as f64;
    let x = svd.solve(&b, tol).expect("SVD computed with U and V");
    (a * x - &b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
