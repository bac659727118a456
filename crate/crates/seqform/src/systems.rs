//! The three path-following systems: substituted unknowns, residuals,
//! analytic Jacobians, closed-form start point, and strategy recovery.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::game::{MixedStrategyProfile, StrategySpace};
use crate::linalg::Mat;
use crate::schedules::{psi, schedules, ScheduleValues};
use crate::seq::{
    centroid_plan, default_eps, default_perturbation, realization_to_mixed, sample_interior_plan,
    Perturbation, RealizationProfile, SequenceFormGame,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomotopyMethod {
    /// Logarithmic-barrier artificial game.
    Logb,
    /// Linear tracing procedure in sequence form.
    Hltp,
    /// Logarithmic tracing procedure in sequence form.
    Hlog,
}

impl HomotopyMethod {
    pub fn name(self) -> &'static str {
        match self {
            HomotopyMethod::Logb => "logb",
            HomotopyMethod::Hltp => "hltp",
            HomotopyMethod::Hlog => "hlog",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logb" => Ok(HomotopyMethod::Logb),
            "hltp" => Ok(HomotopyMethod::Hltp),
            "hlog" => Ok(HomotopyMethod::Hlog),
            other => Err(Error::DomainError(format!("unknown method `{}`", other))),
        }
    }
}

/// Path unknowns: substitution variables, one multiplier per information
/// set, and the homotopy parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Unknowns {
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    pub t: f64,
}

impl Unknowns {
    pub fn dim(&self) -> usize {
        self.x.len() + self.nu.len() + 1
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.nu);
        v.push(self.t);
        v
    }

    pub fn unpack(n0: usize, m0: usize, v: &[f64]) -> Self {
        Unknowns {
            x: v[..n0].to_vec(),
            nu: v[n0..n0 + m0].to_vec(),
            t: v[n0 + m0],
        }
    }
}

/// Flattened index tables for system assembly.
#[derive(Debug, Clone)]
struct Layout {
    /// Per global sequence index: owning player.
    seq_player: Vec<u32>,
    /// Per global sequence index: local sequence index (>= 1).
    seq_local: Vec<u32>,
    /// Whether the sequence has no continuation information sets.
    seq_is_d: Vec<bool>,
    /// Global multiplier index of the sequence's own information set.
    seq_nu_own: Vec<u32>,
    /// Global multiplier indices of the continuation information sets.
    seq_nu_cont: Vec<Vec<u32>>,
    /// Per global infoset: owning player.
    iset_player: Vec<u32>,
    /// Per global infoset: local leading sequence (0 = empty).
    iset_lead_local: Vec<u32>,
    /// Per global infoset: global x-index of the leading sequence, if any.
    iset_lead_x: Vec<Option<u32>>,
    /// Per global infoset: global x-index per action.
    iset_child_x: Vec<Vec<u32>>,
}

impl Layout {
    fn new(sfg: &SequenceFormGame) -> Self {
        let mut seq_player = Vec::with_capacity(sfg.n0);
        let mut seq_local = Vec::with_capacity(sfg.n0);
        let mut seq_is_d = Vec::with_capacity(sfg.n0);
        let mut seq_nu_own = Vec::with_capacity(sfg.n0);
        let mut seq_nu_cont = Vec::with_capacity(sfg.n0);
        let mut iset_player = Vec::with_capacity(sfg.m0);
        let mut iset_lead_local = Vec::with_capacity(sfg.m0);
        let mut iset_lead_x = Vec::with_capacity(sfg.m0);
        let mut iset_child_x = Vec::with_capacity(sfg.m0);

        for (pi, p) in sfg.players.iter().enumerate() {
            for s in 1..p.n_seqs() {
                let (j, _) = p.parent[s].unwrap();
                seq_player.push(pi as u32);
                seq_local.push(s as u32);
                seq_is_d.push(p.is_terminal_seq(s));
                seq_nu_own.push(sfg.nu_index(pi, j) as u32);
                seq_nu_cont.push(
                    p.continuations[s]
                        .iter()
                        .map(|&jq| sfg.nu_index(pi, jq) as u32)
                        .collect(),
                );
            }
            for iset in &p.infosets {
                iset_player.push(pi as u32);
                iset_lead_local.push(iset.leading_seq as u32);
                iset_lead_x.push(if iset.leading_seq == 0 {
                    None
                } else {
                    Some(sfg.x_index(pi, iset.leading_seq) as u32)
                });
                iset_child_x.push(
                    iset.seqs
                        .iter()
                        .map(|&s| sfg.x_index(pi, s) as u32)
                        .collect(),
                );
            }
        }

        Layout {
            seq_player,
            seq_local,
            seq_is_d,
            seq_nu_own,
            seq_nu_cont,
            iset_player,
            iset_lead_local,
            iset_lead_x,
            iset_child_x,
        }
    }
}

/// A bound instance of one method on one game: run parameters plus the
/// precomputed flat tables driving residual and Jacobian assembly.
#[derive(Debug, Clone)]
pub struct HomotopyProblem {
    pub sfg: Arc<SequenceFormGame>,
    pub method: HomotopyMethod,
    pub gamma0: RealizationProfile,
    /// Perturbation profile (barrier method only).
    pub eta0: Option<Perturbation>,
    /// Prior plan (tracing procedures only).
    pub prior: Option<RealizationProfile>,
    /// Stationarity regularizer, drawn from a small sphere.
    pub alpha: Vec<f64>,
    pub kappa0: f64,
    pub eps0: f64,
    /// Centroid plan (logarithmic tracing only).
    pub delta: Option<RealizationProfile>,

    layout: Layout,
    gamma0_flat: Vec<f64>,
    eta0_flat: Vec<f64>,
    prior_flat: Vec<f64>,
    delta_flat: Vec<f64>,
    /// gamma0^(1/kappa0) per sequence; the start point is this minus one.
    tau0_start: Vec<f64>,
    /// gamma0 at each infoset's leading sequence.
    gamma0_lead: Vec<f64>,
}

/// Knobs for seeded problem construction.
#[derive(Debug, Clone)]
pub struct ProblemOptions {
    pub kappa0: f64,
    pub eps0: f64,
    pub alpha_scale: f64,
    /// Perturbation scale; defaults to 1/max |A|.
    pub eps: Option<f64>,
    /// Explicit start plan; otherwise sampled above the perturbation floor.
    pub start: Option<RealizationProfile>,
    /// Use the centroid start instead of a sampled one.
    pub centroid_start: bool,
    /// Explicit prior for the tracing procedures; defaults to the centroid.
    pub prior: Option<RealizationProfile>,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            kappa0: 2.0,
            eps0: 1.0,
            alpha_scale: 1e-2,
            eps: None,
            start: None,
            centroid_start: false,
            prior: None,
        }
    }
}

impl HomotopyProblem {
    /// Builds a problem from explicit pieces. The start plan must dominate
    /// the perturbation for the barrier method.
    pub fn new(
        sfg: Arc<SequenceFormGame>,
        method: HomotopyMethod,
        gamma0: RealizationProfile,
        eta0: Option<Perturbation>,
        prior: Option<RealizationProfile>,
        alpha: Vec<f64>,
        kappa0: f64,
        eps0: f64,
    ) -> Result<Self> {
        if kappa0 <= 1.0 {
            return Err(Error::DomainError(format!("kappa0 = {}", kappa0)));
        }
        if alpha.len() != sfg.n0 {
            return Err(Error::ShapeMismatch("alpha length".into()));
        }
        let eta0 = match method {
            HomotopyMethod::Logb => {
                let eta = match eta0 {
                    Some(e) => e,
                    None => default_perturbation(&sfg, default_eps(&sfg))?,
                };
                for (pi, p) in sfg.players.iter().enumerate() {
                    for s in 1..p.n_seqs() {
                        if gamma0.masses[pi][s] < eta.masses[pi][s] {
                            return Err(Error::DomainError(format!(
                                "start plan below the perturbation at player {} `{}`",
                                pi + 1,
                                p.labels[s]
                            )));
                        }
                    }
                }
                Some(eta)
            }
            _ => None,
        };
        let prior = match method {
            HomotopyMethod::Logb => None,
            _ => Some(match prior {
                Some(p) => p,
                None => centroid_plan(&sfg),
            }),
        };
        let delta = match method {
            HomotopyMethod::Hlog => Some(centroid_plan(&sfg)),
            _ => None,
        };

        let layout = Layout::new(&sfg);
        let gamma0_flat = gamma0.flat(&sfg);
        let eta0_flat = eta0
            .as_ref()
            .map(|e| flat_masses(&sfg, &e.masses))
            .unwrap_or_else(|| vec![0.0; sfg.n0]);
        let prior_flat = prior
            .as_ref()
            .map(|p| p.flat(&sfg))
            .unwrap_or_else(|| vec![0.0; sfg.n0]);
        let delta_flat = delta
            .as_ref()
            .map(|d| d.flat(&sfg))
            .unwrap_or_else(|| vec![0.0; sfg.n0]);
        let tau0_start: Vec<f64> = gamma0_flat.iter().map(|&g| g.powf(1.0 / kappa0)).collect();
        let gamma0_lead: Vec<f64> = (0..sfg.m0)
            .map(|m| {
                let pi = layout.iset_player[m] as usize;
                let lead = layout.iset_lead_local[m] as usize;
                gamma0.masses[pi][lead]
            })
            .collect();

        Ok(HomotopyProblem {
            sfg,
            method,
            gamma0,
            eta0,
            prior,
            alpha,
            kappa0,
            eps0,
            delta,
            layout,
            gamma0_flat,
            eta0_flat,
            prior_flat,
            delta_flat,
            tau0_start,
            gamma0_lead,
        })
    }

    /// Builds a problem with all random ingredients derived from one seed:
    /// the start plan first, then the regularizer direction.
    pub fn from_seed(
        sfg: Arc<SequenceFormGame>,
        method: HomotopyMethod,
        seed: u64,
        opts: &ProblemOptions,
    ) -> Result<Self> {
        let eps = opts.eps.unwrap_or_else(|| default_eps(&sfg));
        let eta = default_perturbation(&sfg, eps)?;
        let gamma0 = match (&opts.start, opts.centroid_start) {
            (Some(g), _) => g.clone(),
            (None, true) => centroid_plan(&sfg),
            (None, false) => sample_interior_plan(&sfg, Some(&eta), seed),
        };
        let alpha = sample_sphere(sfg.n0, opts.alpha_scale, seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
        let eta0 = match method {
            HomotopyMethod::Logb => Some(eta),
            _ => None,
        };
        Self::new(
            sfg,
            method,
            gamma0,
            eta0,
            opts.prior.clone(),
            alpha,
            opts.kappa0,
            opts.eps0,
        )
    }

    pub fn n0(&self) -> usize {
        self.sfg.n0
    }

    pub fn m0(&self) -> usize {
        self.sfg.m0
    }

    /// Rows/columns of the square (x, nu) block.
    pub fn dim(&self) -> usize {
        self.sfg.n0 + self.sfg.m0
    }
}

fn flat_masses(sfg: &SequenceFormGame, masses: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sfg.n0);
    for m in masses {
        out.extend_from_slice(&m[1..]);
    }
    out
}

/// Uniform sample from the sphere of the given radius.
fn sample_sphere(n: usize, radius: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = crate::linalg::norm2(&v);
        if norm > 1e-12 {
            return v.into_iter().map(|z| z * radius / norm).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

/// Substituted strategy point and multipliers with their partials.
#[derive(Debug, Clone)]
pub struct Substitution {
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub dgamma_dx: Vec<f64>,
    pub dlambda_dx: Vec<f64>,
    pub dgamma_dt: Vec<f64>,
    pub dlambda_dt: Vec<f64>,
}

impl Substitution {
    fn zeros(n0: usize) -> Self {
        Substitution {
            gamma: vec![0.0; n0],
            lambda: vec![0.0; n0],
            dgamma_dx: vec![0.0; n0],
            dlambda_dx: vec![0.0; n0],
            dgamma_dt: vec![0.0; n0],
            dlambda_dt: vec![0.0; n0],
        }
    }
}

/// Evaluates the substituted (gamma, lambda) and their partials at (x, t).
pub fn substitute(problem: &HomotopyProblem, x: &[f64], t: f64) -> Result<Substitution> {
    let sch = schedules(t)?;
    let mut sub = Substitution::zeros(problem.n0());
    substitute_into(problem, x, &sch, &mut sub)?;
    Ok(sub)
}

fn substitute_into(
    problem: &HomotopyProblem,
    x: &[f64],
    sch: &ScheduleValues,
    sub: &mut Substitution,
) -> Result<()> {
    let k0 = problem.kappa0;
    let theta = sch.theta;
    let d_theta = sch.d_theta;

    // method-wide barrier argument (per-sequence for the logarithmic tracing)
    let (r_common, dr_common) = match problem.method {
        HomotopyMethod::Logb => {
            let r = (sch.log_c / k0).exp();
            let dr = if r == 0.0 {
                0.0
            } else {
                r * (sch.d_rho / (sch.rho * sch.rho)) / k0
            };
            (r, dr)
        }
        HomotopyMethod::Hltp => {
            if theta > 0.0 {
                let r = theta.powf(1.0 / k0);
                (r, r * d_theta / (k0 * theta))
            } else {
                (0.0, 0.0)
            }
        }
        HomotopyMethod::Hlog => (0.0, 0.0), // per sequence
    };

    for k in 0..problem.n0() {
        let is_d = problem.layout.seq_is_d[k];
        let (r, dr, tau0) = match problem.method {
            HomotopyMethod::Hlog => {
                let base = theta * problem.gamma0_flat[k]
                    + sch.c * (1.0 - theta) * problem.eps0 * problem.delta_flat[k];
                if base > 0.0 {
                    let r = (base.ln() / k0).exp();
                    let dbase = d_theta * problem.gamma0_flat[k]
                        + (sch.d_c * (1.0 - theta) - sch.c * d_theta)
                            * problem.eps0
                            * problem.delta_flat[k];
                    (r, r * dbase / (k0 * base), 1.0)
                } else {
                    (0.0, 0.0, 1.0)
                }
            }
            _ => (r_common, dr_common, problem.tau0_start[k]),
        };
        let p = psi(x[k], r, tau0, k0)?;
        let (d1_dt, d2_dt) = if dr == 0.0 {
            (0.0, 0.0)
        } else {
            (p.d1_dr * dr, p.d2_dr * dr)
        };

        let smooth_variant = !is_d && problem.method != HomotopyMethod::Hlog;
        if smooth_variant {
            sub.gamma[k] = (1.0 - theta) * x[k] + theta * p.psi1;
            sub.dgamma_dx[k] = (1.0 - theta) + theta * p.d1_dv;
            sub.dgamma_dt[k] = d_theta * (p.psi1 - x[k]) + theta * d1_dt;
            sub.lambda[k] = theta * p.psi2;
            sub.dlambda_dx[k] = theta * p.d2_dv;
            sub.dlambda_dt[k] = d_theta * p.psi2 + theta * d2_dt;
        } else {
            let (off, doff) = if problem.method == HomotopyMethod::Logb && is_d {
                (
                    sch.rho * (1.0 - theta) * problem.eta0_flat[k],
                    (sch.d_rho * (1.0 - theta) - sch.rho * d_theta) * problem.eta0_flat[k],
                )
            } else {
                (0.0, 0.0)
            };
            sub.gamma[k] = off + p.psi1;
            sub.dgamma_dx[k] = p.d1_dv;
            sub.dgamma_dt[k] = doff + d1_dt;
            sub.lambda[k] = p.psi2;
            sub.dlambda_dx[k] = p.d2_dv;
            sub.dlambda_dt[k] = d2_dt;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Residual and Jacobian
// ---------------------------------------------------------------------------

/// Evaluation output: residual rows are ordered stationarity-then-flow; the
/// Jacobian columns are ordered (x | nu | t).
#[derive(Debug, Clone)]
pub struct SystemEval {
    pub residual: Vec<f64>,
    pub jacobian: Option<Mat>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Reusable evaluation scratch.
pub struct EvalScratch {
    sub: Substitution,
    /// Effective per-player profile seen by the payoff terms (index 0 = 1).
    eff: Vec<Vec<f64>>,
    /// t-derivative of the effective profile, flat over non-empty sequences.
    deff_dt: Vec<f64>,
    at_seq: Vec<Vec<f64>>,
    vals: Vec<f64>,
    seqs: Vec<usize>,
}

impl EvalScratch {
    pub fn new(sfg: &SequenceFormGame) -> Self {
        EvalScratch {
            sub: Substitution::zeros(sfg.n0),
            eff: sfg
                .players
                .iter()
                .map(|p| {
                    let mut v = vec![0.0; p.n_seqs()];
                    v[0] = 1.0;
                    v
                })
                .collect(),
            deff_dt: vec![0.0; sfg.n0],
            at_seq: sfg.players.iter().map(|p| vec![0.0; p.n_seqs()]).collect(),
            vals: vec![0.0; sfg.player_count()],
            seqs: vec![0; sfg.player_count()],
        }
    }
}

/// Residual of the reduced system at the given unknowns.
pub fn residual(problem: &HomotopyProblem, u: &Unknowns) -> Result<SystemEval> {
    let mut scratch = EvalScratch::new(&problem.sfg);
    let mut out = vec![0.0; problem.dim()];
    residual_into(problem, u, &mut scratch, &mut out)?;
    Ok(SystemEval {
        residual: out,
        jacobian: None,
        gamma: scratch.sub.gamma.clone(),
        lambda: scratch.sub.lambda.clone(),
    })
}

/// Residual plus the analytic (n0+m0) x (n0+m0+1) Jacobian.
pub fn jacobian(problem: &HomotopyProblem, u: &Unknowns) -> Result<SystemEval> {
    let mut scratch = EvalScratch::new(&problem.sfg);
    let mut out = vec![0.0; problem.dim()];
    let mut jac = Mat::zeros(problem.dim(), problem.dim() + 1);
    jacobian_into(problem, u, &mut scratch, &mut out, &mut jac)?;
    Ok(SystemEval {
        residual: out,
        jacobian: Some(jac),
        gamma: scratch.sub.gamma.clone(),
        lambda: scratch.sub.lambda.clone(),
    })
}

/// Coefficients shared by residual and Jacobian assembly.
struct Coefs {
    coef_g: f64,
    dcoef_g: f64,
    coef_zeta: f64,
    dcoef_zeta: f64,
    coef_alpha: f64,
    dcoef_alpha: f64,
    blend: f64,
    dblend: f64,
}

fn coefs(problem: &HomotopyProblem, sch: &ScheduleValues) -> Coefs {
    let (coef_g, dcoef_g) = match problem.method {
        HomotopyMethod::Logb => (1.0 - sch.c, -sch.d_c),
        _ => (1.0 - sch.theta, -sch.d_theta),
    };
    let (blend, dblend) = match problem.method {
        HomotopyMethod::Logb => (1.0, 0.0),
        // opponents enter through y = (1-rho) gamma + rho prior
        _ => (1.0 - sch.rho, -sch.d_rho),
    };
    Coefs {
        coef_g,
        dcoef_g,
        coef_zeta: 1.0 - sch.theta,
        dcoef_zeta: -sch.d_theta,
        coef_alpha: sch.c * (1.0 - sch.theta),
        dcoef_alpha: sch.d_c * (1.0 - sch.theta) - sch.c * sch.d_theta,
        blend,
        dblend,
    }
}

/// Builds the effective profile and per-sequence payoffs in the scratch.
fn prepare_payoffs(
    problem: &HomotopyProblem,
    sch: &ScheduleValues,
    co: &Coefs,
    scratch: &mut EvalScratch,
) {
    let sfg = &problem.sfg;
    for k in 0..sfg.n0 {
        let (pi, s) = (
            problem.layout.seq_player[k] as usize,
            problem.layout.seq_local[k] as usize,
        );
        let g = scratch.sub.gamma[k];
        let dg = scratch.sub.dgamma_dt[k];
        match problem.method {
            HomotopyMethod::Logb => {
                scratch.eff[pi][s] = g;
                scratch.deff_dt[k] = dg;
            }
            _ => {
                let p0 = problem.prior_flat[k];
                scratch.eff[pi][s] = co.blend * g + sch.rho * p0;
                scratch.deff_dt[k] = co.blend * dg + sch.d_rho * (p0 - g);
            }
        }
    }
    for v in scratch.at_seq.iter_mut() {
        v.iter_mut().for_each(|z| *z = 0.0);
    }
    crate::seq::accumulate_at_sequence(sfg, &scratch.eff, &mut scratch.at_seq);
}

fn stationarity_and_flow(
    problem: &HomotopyProblem,
    u: &Unknowns,
    co: &Coefs,
    sch: &ScheduleValues,
    scratch: &EvalScratch,
    out: &mut [f64],
) {
    let sfg = &problem.sfg;
    let n0 = sfg.n0;
    for k in 0..n0 {
        let (pi, s) = (
            problem.layout.seq_player[k] as usize,
            problem.layout.seq_local[k] as usize,
        );
        let mut zeta = 0.0;
        for &q in &problem.layout.seq_nu_cont[k] {
            zeta += u.nu[q as usize];
        }
        out[k] = co.coef_g * scratch.at_seq[pi][s] + scratch.sub.lambda[k]
            - u.nu[problem.layout.seq_nu_own[k] as usize]
            + co.coef_zeta * zeta
            - co.coef_alpha * problem.alpha[k];
    }
    for m in 0..sfg.m0 {
        let lead_local = problem.layout.iset_lead_local[m] as usize;
        let pi = problem.layout.iset_player[m] as usize;
        let lead_gamma = if lead_local == 0 {
            1.0
        } else {
            scratch.sub.gamma[problem.layout.iset_lead_x[m].unwrap() as usize]
        };
        let mut sum = 0.0;
        for &cx in &problem.layout.iset_child_x[m] {
            sum += scratch.sub.gamma[cx as usize];
        }
        let _ = pi;
        out[n0 + m] =
            sum - (1.0 - sch.theta) * lead_gamma - sch.theta * problem.gamma0_lead[m];
    }
}

/// Residual into a caller-provided buffer, reusing scratch storage.
pub fn residual_into(
    problem: &HomotopyProblem,
    u: &Unknowns,
    scratch: &mut EvalScratch,
    out: &mut [f64],
) -> Result<()> {
    let sch = schedules(u.t)?;
    substitute_into(problem, &u.x, &sch, &mut scratch.sub)?;
    let co = coefs(problem, &sch);
    prepare_payoffs(problem, &sch, &co, scratch);
    stationarity_and_flow(problem, u, &co, &sch, scratch, out);
    Ok(())
}

/// Residual and Jacobian into caller-provided buffers.
pub fn jacobian_into(
    problem: &HomotopyProblem,
    u: &Unknowns,
    scratch: &mut EvalScratch,
    out: &mut [f64],
    jac: &mut Mat,
) -> Result<()> {
    let sch = schedules(u.t)?;
    substitute_into(problem, &u.x, &sch, &mut scratch.sub)?;
    let co = coefs(problem, &sch);
    prepare_payoffs(problem, &sch, &co, scratch);
    stationarity_and_flow(problem, u, &co, &sch, scratch, out);

    let sfg = &problem.sfg;
    let n0 = sfg.n0;
    let m0 = sfg.m0;
    let tcol = n0 + m0;
    jac.fill_zero();

    // stationarity rows: local terms
    for k in 0..n0 {
        let (pi, s) = (
            problem.layout.seq_player[k] as usize,
            problem.layout.seq_local[k] as usize,
        );
        *jac.at_mut(k, k) += scratch.sub.dlambda_dx[k];
        *jac.at_mut(k, n0 + problem.layout.seq_nu_own[k] as usize) -= 1.0;
        let mut zeta = 0.0;
        for &q in &problem.layout.seq_nu_cont[k] {
            *jac.at_mut(k, n0 + q as usize) += co.coef_zeta;
            zeta += u.nu[q as usize];
        }
        *jac.at_mut(k, tcol) += co.dcoef_g * scratch.at_seq[pi][s]
            + scratch.sub.dlambda_dt[k]
            + co.dcoef_zeta * zeta
            - co.dcoef_alpha * problem.alpha[k];
    }

    // payoff coupling: per terminal entry, all ordered player pairs
    let n = sfg.player_count();
    for e in &sfg.entries {
        for i in 0..n {
            scratch.seqs[i] = e.seq[i] as usize;
            scratch.vals[i] = scratch.eff[i][scratch.seqs[i]];
        }
        for i in 0..n {
            let si = scratch.seqs[i];
            if si == 0 {
                continue;
            }
            let row = sfg.x_index(i, si);
            let base = co.coef_g * e.coeff[i];
            if base == 0.0 {
                continue;
            }
            for iq in 0..n {
                if iq == i {
                    continue;
                }
                let mut prod = base;
                for ir in 0..n {
                    if ir != i && ir != iq {
                        prod *= scratch.vals[ir];
                    }
                }
                if prod == 0.0 {
                    continue;
                }
                let sq = scratch.seqs[iq];
                if sq != 0 {
                    let col = sfg.x_index(iq, sq);
                    *jac.at_mut(row, col) += prod * co.blend * scratch.sub.dgamma_dx[col];
                    *jac.at_mut(row, tcol) += prod * scratch.deff_dt[col];
                }
            }
        }
    }

    // flow rows
    for m in 0..m0 {
        let row = n0 + m;
        let mut dt = 0.0;
        for &cx in &problem.layout.iset_child_x[m] {
            *jac.at_mut(row, cx as usize) += scratch.sub.dgamma_dx[cx as usize];
            dt += scratch.sub.dgamma_dt[cx as usize];
        }
        match problem.layout.iset_lead_x[m] {
            None => {
                // empty leading sequence: gamma = gamma0 = 1, only theta varies
                dt += sch.d_theta * (1.0 - problem.gamma0_lead[m]);
            }
            Some(lx) => {
                let lx = lx as usize;
                *jac.at_mut(row, lx) -= (1.0 - sch.theta) * scratch.sub.dgamma_dx[lx];
                dt += sch.d_theta * scratch.sub.gamma[lx]
                    - (1.0 - sch.theta) * scratch.sub.dgamma_dt[lx]
                    - sch.d_theta * problem.gamma0_lead[m];
            }
        }
        *jac.at_mut(row, tcol) += dt;
    }

    Ok(())
}

// ---------------------------------------------------------------------------
// Start point and recovery
// ---------------------------------------------------------------------------

/// The closed-form solution at t = 2, shared by all three methods.
pub fn start_point(problem: &HomotopyProblem) -> Unknowns {
    Unknowns {
        x: problem.tau0_start.iter().map(|&t| t - 1.0).collect(),
        nu: vec![1.0; problem.m0()],
        t: 2.0,
    }
}

/// Recovers the realization plan at a path point. Defined for t <= 1 only,
/// where the flow rows coincide with the plan system.
pub fn recover_plan(problem: &HomotopyProblem, u: &Unknowns) -> Result<RealizationProfile> {
    if u.t > 1.0 {
        return Err(Error::PhaseError(u.t));
    }
    let sch = schedules(u.t)?;
    let sub = substitute(problem, &u.x, u.t)?;
    let flat: Vec<f64> = match problem.method {
        HomotopyMethod::Logb => sub.gamma,
        _ => sub
            .gamma
            .iter()
            .zip(&problem.prior_flat)
            .map(|(&g, &p0)| (1.0 - sch.rho) * g + sch.rho * p0)
            .collect(),
    };
    Ok(RealizationProfile::from_flat(&problem.sfg, &flat))
}

/// Recovers the plan and its behavioral-product mixed strategy.
pub fn recover_profile(
    problem: &HomotopyProblem,
    u: &Unknowns,
    cap: u128,
) -> Result<(RealizationProfile, MixedStrategyProfile)> {
    let plan = recover_plan(problem, u)?;
    let space = StrategySpace::new(&problem.sfg.game, cap)?;
    let mixed = realization_to_mixed(&problem.sfg, &space, &plan)?;
    Ok((plan, mixed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::samples;
    use crate::linalg::norm2;
    use crate::seq::build_sequence_form;

    fn problem(method: HomotopyMethod, seed: u64) -> HomotopyProblem {
        let sfg = Arc::new(build_sequence_form(&samples::matching_pennies()).unwrap());
        HomotopyProblem::from_seed(sfg, method, seed, &ProblemOptions::default()).unwrap()
    }

    fn all_methods() -> [HomotopyMethod; 3] {
        [
            HomotopyMethod::Logb,
            HomotopyMethod::Hltp,
            HomotopyMethod::Hlog,
        ]
    }

    #[test]
    fn start_point_zeroes_residual() {
        for method in all_methods() {
            let p = problem(method, 11);
            let u = start_point(&p);
            let eval = residual(&p, &u).unwrap();
            assert!(
                norm2(&eval.residual) <= 1e-12,
                "{:?}: {}",
                method,
                norm2(&eval.residual)
            );
        }
    }

    #[test]
    fn start_point_values() {
        let sfg = Arc::new(build_sequence_form(&samples::matching_pennies()).unwrap());
        let p = HomotopyProblem::from_seed(
            sfg,
            HomotopyMethod::Logb,
            1,
            &ProblemOptions {
                centroid_start: true,
                ..Default::default()
            },
        )
        .unwrap();
        let u = start_point(&p);
        for &xi in &u.x {
            assert!((xi - (0.5f64.sqrt() - 1.0)).abs() < 1e-15);
        }
        assert!(u.nu.iter().all(|&v| v == 1.0));
        assert_eq!(u.t, 2.0);
    }

    #[test]
    fn start_point_shared_across_methods() {
        let sfg = Arc::new(build_sequence_form(&samples::selten_2x2()).unwrap());
        let opts = ProblemOptions::default();
        let starts: Vec<Unknowns> = all_methods()
            .into_iter()
            .map(|m| start_point(&HomotopyProblem::from_seed(sfg.clone(), m, 5, &opts).unwrap()))
            .collect();
        assert_eq!(starts[0], starts[1]);
        assert_eq!(starts[0], starts[2]);
    }

    #[test]
    fn substitution_recovers_start_plan_at_t2() {
        for method in all_methods() {
            let p = problem(method, 3);
            let u = start_point(&p);
            let sub = substitute(&p, &u.x, 2.0).unwrap();
            for (g, g0) in sub.gamma.iter().zip(&p.gamma0_flat) {
                assert!((g - g0).abs() < 1e-13);
            }
            for l in &sub.lambda {
                assert!((l - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn logb_complementarity_identity() {
        let p = problem(HomotopyMethod::Logb, 17);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let t = 0.05 + 1.9 * rand::Rng::gen::<f64>(&mut rng);
            let x: Vec<f64> = (0..p.n0())
                .map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))
                .collect();
            let sch = schedules(t).unwrap();
            let sub = substitute(&p, &x, t).unwrap();
            for k in 0..p.n0() {
                if !p.layout.seq_is_d[k] {
                    continue;
                }
                let lhs = (sub.gamma[k]
                    - sch.rho * (1.0 - sch.theta) * p.eta0_flat[k])
                    * sub.lambda[k];
                let rhs = sch.c * p.gamma0_flat[k];
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                    "t={} lhs={} rhs={}",
                    t,
                    lhs,
                    rhs
                );
            }
        }
    }

    #[test]
    fn hltp_reduces_to_power_form_below_one() {
        let p = problem(HomotopyMethod::Hltp, 23);
        let x: Vec<f64> = vec![0.3, -0.4, 0.7, -0.2];
        let sub = substitute(&p, &x, 0.5).unwrap();
        for k in 0..p.n0() {
            if p.layout.seq_is_d[k] {
                let g = x[k].max(0.0).powi(2);
                let l = (-x[k]).max(0.0).powi(2);
                assert!((sub.gamma[k] - g).abs() < 1e-15);
                assert!((sub.lambda[k] - l).abs() < 1e-15);
                assert!(sub.gamma[k] * sub.lambda[k] == 0.0);
            }
        }
    }

    #[test]
    fn flow_rows_vanish_at_start() {
        for method in all_methods() {
            let p = problem(method, 29);
            let u = start_point(&p);
            let eval = residual(&p, &u).unwrap();
            for m in 0..p.m0() {
                assert!(eval.residual[p.n0() + m].abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_single_player_root_at_t1() {
        // one info set, two actions, uniform start, symmetric perturbation:
        // the symmetric substituted point solves the system at t = 1
        let game = samples::three_way_choice([1.0, 1.0, 1.0]);
        let sfg = Arc::new(build_sequence_form(&game).unwrap());
        let gamma0 = centroid_plan(&sfg);
        let eta0 = default_perturbation(&sfg, default_eps(&sfg)).unwrap();
        let p = HomotopyProblem::new(
            sfg.clone(),
            HomotopyMethod::Logb,
            gamma0,
            Some(eta0.clone()),
            None,
            vec![0.0; sfg.n0],
            2.0,
            1.0,
        )
        .unwrap();
        // solve psi1(x, 1; (1/3)^(1/2), 2) = 1/3 - eta for the symmetric x
        let target = 1.0 / 3.0 - eta0.masses[0][1];
        let tau0 = (1.0f64 / 3.0).powf(0.5);
        // psi1 = ((x + sqrt(x^2 + 4 tau0))/2)^2 = target
        let root = target.sqrt();
        let x_sym = root - tau0 / root;
        let lam = (tau0 / root).powi(2);
        let u = Unknowns {
            x: vec![x_sym; 3],
            nu: vec![lam],
            t: 1.0,
        };
        let eval = residual(&p, &u).unwrap();
        assert!(norm2(&eval.residual) < 1e-12, "{:?}", eval.residual);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sfg = Arc::new(build_sequence_form(&samples::selten_2x2()).unwrap());
        for method in all_methods() {
            let p = HomotopyProblem::from_seed(
                sfg.clone(),
                method,
                41,
                &ProblemOptions::default(),
            )
            .unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(7);
            for &t in &[1.9, 1.5, 1.2, 0.9, 0.5, 0.1] {
                let u = Unknowns {
                    x: (0..p.n0())
                        .map(|_| rand::Rng::gen_range(&mut rng, -0.8..0.8))
                        .collect(),
                    nu: (0..p.m0())
                        .map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))
                        .collect(),
                    t,
                };
                let eval = jacobian(&p, &u).unwrap();
                let jac = eval.jacobian.unwrap();
                let (max_err, max_val) = fd_compare(&p, &u, &jac);
                assert!(
                    max_err <= 1e-6 * (1.0 + max_val),
                    "{:?} t={}: err {} scale {}",
                    method,
                    t,
                    max_err,
                    max_val
                );
            }
        }
    }

    /// Central finite differences of the residual against an analytic
    /// Jacobian; returns (max abs error, max abs analytic entry).
    pub(crate) fn fd_compare(p: &HomotopyProblem, u: &Unknowns, jac: &Mat) -> (f64, f64) {
        let dim = p.dim();
        let mut max_err: f64 = 0.0;
        let mut max_val: f64 = 0.0;
        for r in 0..jac.rows() {
            for c in 0..jac.cols() {
                max_val = max_val.max(jac.at(r, c).abs());
            }
        }
        let mut probe = |col: usize, plus: &Unknowns, minus: &Unknowns, h: f64| {
            let rp = residual(p, plus).unwrap().residual;
            let rm = residual(p, minus).unwrap().residual;
            for r in 0..dim {
                let fd = (rp[r] - rm[r]) / (2.0 * h);
                max_err = max_err.max((fd - jac.at(r, col)).abs());
            }
        };
        for k in 0..p.n0() {
            let h = 1e-6 * (1.0 + u.x[k].abs());
            let mut up = u.clone();
            let mut dn = u.clone();
            up.x[k] += h;
            dn.x[k] -= h;
            probe(k, &up, &dn, h);
        }
        for m in 0..p.m0() {
            let h = 1e-6 * (1.0 + u.nu[m].abs());
            let mut up = u.clone();
            let mut dn = u.clone();
            up.nu[m] += h;
            dn.nu[m] -= h;
            probe(p.n0() + m, &up, &dn, h);
        }
        let h = 1e-6 * (1.0 + u.t.abs());
        let mut up = u.clone();
        let mut dn = u.clone();
        up.t += h;
        dn.t -= h;
        probe(p.dim(), &up, &dn, h);
        (max_err, max_val)
    }
}
