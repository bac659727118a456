//! Pseudo-arclength predictor-corrector tracing of the homotopy path from
//! t = 2 down to the termination level.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::MixedStrategyProfile;
use crate::linalg::{norm2, LuFactors, Mat};
use crate::seq::{RealizationProfile, SequenceFormGame};
use crate::systems::{
    jacobian_into, recover_plan, recover_profile, residual_into, start_point, EvalScratch,
    HomotopyProblem, Unknowns,
};

#[derive(Debug, Clone)]
pub struct TracerConfig {
    /// Predictor step h = step_scale * t^step_exponent.
    pub step_scale: f64,
    pub step_exponent: f64,
    /// Corrector acceptance: residual norm <= corrector_scale * t^corrector_exponent.
    pub corrector_scale: f64,
    pub corrector_exponent: f64,
    /// Successful termination once t falls to this level.
    pub t_end: f64,
    pub max_iterations: usize,
    pub max_seconds: f64,
    pub min_step: f64,
    pub newton_max_iters: usize,
    /// Endpoint refinement target.
    pub final_tol: f64,
    /// Cap on reduced-strategy enumeration when recovering the mixed image.
    pub mixed_cap: u128,
}

impl Default for TracerConfig {
    fn default() -> Self {
        TracerConfig {
            step_scale: 0.05,
            step_exponent: 0.3,
            corrector_scale: 0.5,
            corrector_exponent: 0.3,
            t_end: 1e-4,
            max_iterations: 10_000,
            max_seconds: 3600.0,
            min_step: 1e-10,
            newton_max_iters: 5,
            final_tol: 1e-8,
            mixed_cap: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    Success,
    IterationLimit,
    TimeLimit,
    StepUnderflow,
}

impl TraceStatus {
    pub fn name(self) -> &'static str {
        match self {
            TraceStatus::Success => "success",
            TraceStatus::IterationLimit => "iteration_limit",
            TraceStatus::TimeLimit => "time_limit",
            TraceStatus::StepUnderflow => "step_underflow",
        }
    }
}

/// One accepted path point.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iteration: usize,
    pub t: f64,
    pub arclength: f64,
    pub residual: f64,
    pub step: f64,
    /// Substituted strategy point, flat over non-empty sequences.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub corrector_failures: usize,
    pub endgame_residual: f64,
    pub refinement_stalled: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub status: TraceStatus,
    pub records: Vec<TraceRecord>,
    /// Accepted unknowns per record, for post-hoc certification.
    pub path: Vec<Unknowns>,
    pub final_unknowns: Unknowns,
    /// Recovered plan and, when enumeration is feasible, its mixed image.
    pub equilibrium: Option<(RealizationProfile, Option<MixedStrategyProfile>)>,
    pub diagnostics: Diagnostics,
}

impl TraceResult {
    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.iteration).unwrap_or(0)
    }
}

fn add_scaled(u: &[f64], s: f64, d: &[f64], out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(u).zip(d) {
        *o = a + s * b;
    }
}

/// Bordered matrix [J; row] used for both tangent and corrector solves.
fn bordered(jac: &Mat, row: &[f64]) -> Mat {
    let n = jac.rows();
    let mut b = Mat::zeros(n + 1, n + 1);
    for c in 0..n + 1 {
        for r in 0..n {
            *b.at_mut(r, c) = jac.at(r, c);
        }
        *b.at_mut(n, c) = row[c];
    }
    b
}

/// Follows the smooth path of the problem's system from the closed-form
/// start at t = 2 until t reaches `config.t_end`, then refines the endpoint
/// and recovers the equilibrium.
pub fn trace(problem: &HomotopyProblem, config: &TracerConfig) -> Result<TraceResult> {
    let clock = Instant::now();
    let sfg = &problem.sfg;
    let n = problem.dim();
    let mut scratch = EvalScratch::new(sfg);
    let mut res = vec![0.0; n];
    let mut jac = Mat::zeros(n, n + 1);

    let mut u = start_point(problem).pack();
    residual_into(problem, &Unknowns::unpack(sfg.n0, sfg.m0, &u), &mut scratch, &mut res)?;
    let start_res = norm2(&res);
    if start_res > 1e-10 {
        return Err(Error::DomainError(format!(
            "start point residual {:.3e}",
            start_res
        )));
    }

    let mut tau_prev = vec![0.0; n + 1];
    tau_prev[n] = -1.0; // leave t = 2 downward
    let mut records = Vec::new();
    let mut path = Vec::new();
    let mut diag = Diagnostics::default();
    let mut arclength = 0.0;
    let mut reduction = 1.0f64;
    let mut consecutive = 0usize;

    let snapshot = |u: &[f64], scratch: &mut EvalScratch, res: &mut Vec<f64>| -> Vec<f64> {
        // gamma of the accepted point for the record
        let uk = Unknowns::unpack(sfg.n0, sfg.m0, u);
        let _ = residual_into(problem, &uk, scratch, res);
        crate::systems::substitute(problem, &uk.x, uk.t)
            .map(|s| s.gamma)
            .unwrap_or_default()
    };

    records.push(TraceRecord {
        iteration: 0,
        t: 2.0,
        arclength: 0.0,
        residual: start_res,
        step: 0.0,
        gamma: snapshot(&u, &mut scratch, &mut res),
    });
    path.push(Unknowns::unpack(sfg.n0, sfg.m0, &u));

    let mut status = TraceStatus::IterationLimit;
    let mut iter = 0usize;
    while iter < config.max_iterations {
        iter += 1;
        if clock.elapsed().as_secs_f64() > config.max_seconds {
            status = TraceStatus::TimeLimit;
            break;
        }

        let uk = Unknowns::unpack(sfg.n0, sfg.m0, &u);
        jacobian_into(problem, &uk, &mut scratch, &mut res, &mut jac)?;
        let border = bordered(&jac, &tau_prev);
        let (tau, lu) = match LuFactors::new(border) {
            Ok(lu) => {
                let mut z = vec![0.0; n + 1];
                z[n] = 1.0;
                lu.solve_in_place(&mut z)?;
                let nz = norm2(&z);
                if !nz.is_finite() || nz == 0.0 {
                    (tangent_by_svd(&jac, &tau_prev)?, None)
                } else {
                    z.iter_mut().for_each(|v| *v /= nz);
                    (z, Some(lu))
                }
            }
            Err(_) => (tangent_by_svd(&jac, &tau_prev)?, None),
        };

        // one predictor-corrector attempt per outer iteration
        let t_cur = u[n];
        let mut h = config.step_scale * t_cur.powf(config.step_exponent) * reduction;
        if h < config.min_step {
            status = TraceStatus::StepUnderflow;
            break;
        }
        // keep t strictly positive along the prediction
        if tau[n] < 0.0 {
            let t_floor = 0.2 * config.t_end;
            let h_cap = (t_cur - t_floor) / (-tau[n]);
            h = h.min(h_cap);
        }

        let mut v = vec![0.0; n + 1];
        add_scaled(&u, h, &tau, &mut v);

        let accepted = correct(
            problem,
            config,
            &mut scratch,
            &mut res,
            &mut jac,
            lu.as_ref(),
            &tau,
            &v.clone(),
            &mut v,
        )?;

        match accepted {
            Some(res_norm) => {
                let mut dist = 0.0;
                for k in 0..n + 1 {
                    let d = v[k] - u[k];
                    dist += d * d;
                }
                arclength += dist.sqrt();
                u = v;
                tau_prev = tau;
                consecutive += 1;
                if consecutive >= 3 {
                    reduction = (reduction * 2.0).min(1.0);
                    consecutive = 0;
                }
                records.push(TraceRecord {
                    iteration: iter,
                    t: u[n],
                    arclength,
                    residual: res_norm,
                    step: h,
                    gamma: snapshot(&u, &mut scratch, &mut res),
                });
                path.push(Unknowns::unpack(sfg.n0, sfg.m0, &u));
                if u[n] <= config.t_end {
                    status = TraceStatus::Success;
                    break;
                }
            }
            None => {
                diag.corrector_failures += 1;
                consecutive = 0;
                reduction *= 0.5;
                if config.step_scale * u[n].powf(config.step_exponent) * reduction
                    < config.min_step
                {
                    status = TraceStatus::StepUnderflow;
                    break;
                }
            }
        }
    }

    let mut final_unknowns = Unknowns::unpack(sfg.n0, sfg.m0, &u);
    let mut equilibrium = None;
    if status == TraceStatus::Success {
        let (refined, endgame_residual, stalled) =
            refine_endpoint(problem, &final_unknowns, config.final_tol)?;
        final_unknowns = refined;
        diag.endgame_residual = endgame_residual;
        diag.refinement_stalled = stalled;
        if stalled && endgame_residual > 1e-6 {
            status = TraceStatus::StepUnderflow;
        } else {
            let plan = recover_plan(problem, &final_unknowns)?;
            let mixed = match recover_profile(problem, &final_unknowns, config.mixed_cap) {
                Ok((_, mixed)) => Some(mixed),
                Err(Error::CombinatorialLimit { .. }) => None,
                Err(e) => return Err(e),
            };
            equilibrium = Some((plan, mixed));
        }
    }
    diag.seconds = clock.elapsed().as_secs_f64();

    Ok(TraceResult {
        status,
        records,
        path,
        final_unknowns,
        equilibrium,
        diagnostics: diag,
    })
}

/// Chord-Newton corrector on the hyperplane through the predicted point.
/// Falls back to one fresh factorization if the chord stalls. Returns the
/// accepted residual norm, or None on failure.
#[allow(clippy::too_many_arguments)]
fn correct(
    problem: &HomotopyProblem,
    config: &TracerConfig,
    scratch: &mut EvalScratch,
    res: &mut Vec<f64>,
    jac: &mut Mat,
    chord: Option<&LuFactors>,
    tau: &[f64],
    predicted: &[f64],
    v: &mut Vec<f64>,
) -> Result<Option<f64>> {
    let sfg = &problem.sfg;
    let n = res.len();

    let eval = |v: &[f64], scratch: &mut EvalScratch, res: &mut Vec<f64>| -> Option<f64> {
        if v[n] <= 0.0 || v[n] > 2.0 {
            return None;
        }
        let uk = Unknowns::unpack(sfg.n0, sfg.m0, v);
        match residual_into(problem, &uk, scratch, res) {
            Ok(()) => {
                let nrm = norm2(res);
                nrm.is_finite().then_some(nrm)
            }
            Err(_) => None,
        }
    };

    let tol_at = |t: f64| config.corrector_scale * t.powf(config.corrector_exponent);

    let mut rhs = vec![0.0; n + 1];
    let mut run = |lu: &LuFactors,
                   iters: usize,
                   v: &mut Vec<f64>,
                   scratch: &mut EvalScratch,
                   res: &mut Vec<f64>|
     -> Result<Option<f64>> {
        for _ in 0..iters {
            let Some(_) = eval(v, scratch, res) else {
                return Ok(None);
            };
            let mut off = 0.0;
            for k in 0..n + 1 {
                off += tau[k] * (v[k] - predicted[k]);
            }
            rhs[..n].copy_from_slice(res);
            rhs[n] = off;
            lu.solve_in_place(&mut rhs)?;
            for k in 0..n + 1 {
                v[k] -= rhs[k];
            }
            if let Some(nrm) = eval(v, scratch, res) {
                if nrm <= tol_at(v[n]) {
                    return Ok(Some(nrm));
                }
            } else {
                return Ok(None);
            }
        }
        Ok(Some(f64::NAN)) // ran out of iterations without acceptance
    };

    let first = match chord {
        Some(lu) => run(lu, config.newton_max_iters, v, scratch, res)?,
        None => Some(f64::NAN),
    };
    match first {
        Some(nrm) if nrm.is_finite() => return Ok(Some(nrm)),
        None => return Ok(None),
        _ => {}
    }

    // refresh the Jacobian at the current iterate and retry
    if v[n] <= 0.0 || v[n] > 2.0 {
        return Ok(None);
    }
    let uk = Unknowns::unpack(sfg.n0, sfg.m0, v);
    if jacobian_into(problem, &uk, scratch, res, jac).is_err() {
        return Ok(None);
    }
    let border = bordered(jac, tau);
    let Ok(lu) = LuFactors::new(border) else {
        return Ok(None);
    };
    match run(&lu, config.newton_max_iters, v, scratch, res)? {
        Some(nrm) if nrm.is_finite() => Ok(Some(nrm)),
        _ => Ok(None),
    }
}

/// Tangent via full SVD when the bordered solve is unusable.
fn tangent_by_svd(jac: &Mat, orient: &[f64]) -> Result<Vec<f64>> {
    let v = crate::linalg::svd_null_vector(jac)?;
    let d = crate::linalg::dot(&v, orient);
    Ok(if d < 0.0 {
        v.into_iter().map(|z| -z).collect()
    } else {
        v
    })
}

/// Fixed-t Newton refinement of a corrector-accepted endpoint. Returns the
/// refined unknowns, the final residual norm, and whether refinement
/// stalled above the target.
pub fn refine_endpoint(
    problem: &HomotopyProblem,
    u: &Unknowns,
    final_tol: f64,
) -> Result<(Unknowns, f64, bool)> {
    let n = problem.dim();
    let mut scratch = EvalScratch::new(&problem.sfg);
    let mut res = vec![0.0; n];
    let mut jac = Mat::zeros(n, n + 1);
    let mut cur = u.clone();

    residual_into(problem, &cur, &mut scratch, &mut res)?;
    let mut nrm = norm2(&res);
    let mut stall = 0;
    for _ in 0..50 {
        if nrm <= final_tol {
            return Ok((cur, nrm, false));
        }
        jacobian_into(problem, &cur, &mut scratch, &mut res, &mut jac)?;
        let mut square = Mat::zeros(n, n);
        for c in 0..n {
            for r in 0..n {
                *square.at_mut(r, c) = jac.at(r, c);
            }
        }
        let lu = match LuFactors::new(square) {
            Ok(lu) => lu,
            Err(_) => return Ok((cur, nrm, true)),
        };
        let mut step = res.clone();
        lu.solve_in_place(&mut step)?;
        for k in 0..problem.n0() {
            cur.x[k] -= step[k];
        }
        for m in 0..problem.m0() {
            cur.nu[m] -= step[problem.n0() + m];
        }
        residual_into(problem, &cur, &mut scratch, &mut res)?;
        let next = norm2(&res);
        if !next.is_finite() {
            return Ok((cur, nrm, true));
        }
        if next >= 0.9 * nrm {
            stall += 1;
            if stall >= 2 {
                return Ok((cur, next.min(nrm), next.min(nrm) > final_tol));
            }
        } else {
            stall = 0;
        }
        nrm = next;
    }
    Ok((cur, nrm, nrm > final_tol))
}

/// Writes the accepted path as CSV: iteration counters, t, arclength,
/// residual, step, then one column per sequence labelled `p{i}:{label}`.
pub fn write_trace_csv<W: Write>(
    sfg: &SequenceFormGame,
    result: &TraceResult,
    mut w: W,
) -> Result<()> {
    let mut header = String::from("iter,t,arclength,residual,step");
    for (pi, p) in sfg.players.iter().enumerate() {
        for s in 1..p.n_seqs() {
            header.push_str(&format!(",p{}:{}", pi + 1, csv_escape(&p.labels[s])));
        }
    }
    writeln!(w, "{}", header)?;
    for rec in &result.records {
        let mut line = format!(
            "{},{},{},{},{}",
            rec.iteration, rec.t, rec.arclength, rec.residual, rec.step
        );
        for g in &rec.gamma {
            line.push(',');
            line.push_str(&format!("{}", g));
        }
        writeln!(w, "{}", line)?;
    }
    Ok(())
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
