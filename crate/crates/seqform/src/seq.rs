//! Sequence-form representation: sequence sets, realization plans,
//! perturbations, payoff evaluation, and best-response analysis.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::game::{ExtensiveFormGame, MixedStrategyProfile, NodeId, NodeKind, StrategySpace};

/// One information set in a player's sequence structure.
#[derive(Debug, Clone)]
pub struct Infoset {
    pub id: String,
    /// Sequence leading to this information set (0 = empty sequence).
    pub leading_seq: usize,
    pub action_labels: Vec<String>,
    /// Extended sequence index per action.
    pub seqs: Vec<usize>,
}

/// Per-player sequence set with parent/extension structure.
#[derive(Debug, Clone)]
pub struct PlayerSeqs {
    /// Sequence labels; index 0 is the empty sequence, rendered `~`.
    pub labels: Vec<String>,
    /// For each non-empty sequence: (infoset index, action index) it extends.
    pub parent: Vec<Option<(usize, usize)>>,
    pub infosets: Vec<Infoset>,
    /// Continuation information sets per sequence (the map M_i).
    pub continuations: Vec<Vec<usize>>,
}

impl PlayerSeqs {
    pub fn n_seqs(&self) -> usize {
        self.labels.len()
    }

    /// True if the non-empty sequence has no continuation information sets
    /// (membership in the set D_i).
    pub fn is_terminal_seq(&self, seq: usize) -> bool {
        self.continuations[seq].is_empty()
    }
}

/// Sparse terminal-payoff entry: one per terminal history, with the chance
/// weight folded into the per-player coefficients.
#[derive(Debug, Clone)]
pub struct TerminalEntry {
    /// Sequence index per player (0 = empty).
    pub seq: Vec<u32>,
    /// u_i at the terminal times the chance realization weight.
    pub coeff: Vec<f64>,
}

/// The sequence form of an extensive-form game.
#[derive(Debug, Clone)]
pub struct SequenceFormGame {
    pub game: ExtensiveFormGame,
    pub players: Vec<PlayerSeqs>,
    pub entries: Vec<TerminalEntry>,
    /// Total non-empty sequence count over all players.
    pub n0: usize,
    /// Total information-set count.
    pub m0: usize,
    /// Global x-index of each player's first non-empty sequence.
    pub x_offset: Vec<usize>,
    /// Global index of each player's first information set.
    pub nu_offset: Vec<usize>,
    pub max_actions: usize,
}

impl SequenceFormGame {
    pub fn player_count(&self) -> usize {
        self.players.len()
    }

    /// Global x-index of (player, non-empty local sequence).
    #[inline]
    pub fn x_index(&self, player: usize, seq: usize) -> usize {
        debug_assert!(seq >= 1);
        self.x_offset[player] + seq - 1
    }

    /// Global index of (player, information set).
    #[inline]
    pub fn nu_index(&self, player: usize, infoset: usize) -> usize {
        self.nu_offset[player] + infoset
    }

    /// Inverse of `x_index`: (player, local sequence).
    pub fn seq_of_x(&self, x: usize) -> (usize, usize) {
        let player = match self.x_offset.binary_search(&x) {
            Ok(p) => {
                // offsets of empty players repeat; take the last with this offset
                let mut p = p;
                while p + 1 < self.x_offset.len() && self.x_offset[p + 1] == x {
                    p += 1;
                }
                p
            }
            Err(p) => p - 1,
        };
        (player, x - self.x_offset[player] + 1)
    }
}

/// Builds the sequence form with deterministic depth-first indices.
pub fn build_sequence_form(game: &ExtensiveFormGame) -> Result<SequenceFormGame> {
    let n = game.player_count;
    let mut players: Vec<PlayerSeqs> = (0..n)
        .map(|_| PlayerSeqs {
            labels: vec!["~".to_string()],
            parent: vec![None],
            infosets: Vec::new(),
            continuations: vec![Vec::new()],
        })
        .collect();
    let mut infoset_index: Vec<std::collections::BTreeMap<String, usize>> =
        vec![Default::default(); n];
    let mut entries = Vec::new();

    // state: current sequence index and chance weight per path
    fn walk(
        game: &ExtensiveFormGame,
        id: NodeId,
        cur_seq: &mut Vec<usize>,
        chance: f64,
        players: &mut [PlayerSeqs],
        infoset_index: &mut [std::collections::BTreeMap<String, usize>],
        entries: &mut Vec<TerminalEntry>,
    ) -> Result<()> {
        let node = &game.nodes[id];
        match &node.kind {
            NodeKind::Terminal { payoffs } => {
                entries.push(TerminalEntry {
                    seq: cur_seq.iter().map(|&s| s as u32).collect(),
                    coeff: payoffs.iter().map(|&u| u * chance).collect(),
                });
                Ok(())
            }
            NodeKind::Chance { probs } => {
                for (&c, &p) in node.children.iter().zip(probs) {
                    walk(game, c, cur_seq, chance * p, players, infoset_index, entries)?;
                }
                Ok(())
            }
            NodeKind::Decision {
                player,
                infoset,
                actions,
            } => {
                let pi = player - 1;
                let lead = cur_seq[pi];
                let j = match infoset_index[pi].get(infoset) {
                    Some(&j) => {
                        if players[pi].infosets[j].leading_seq != lead {
                            return Err(Error::PerfectRecallViolation(format!(
                                "information set `{}` is reached by different sequences of player {}",
                                infoset, player
                            )));
                        }
                        j
                    }
                    None => {
                        let j = players[pi].infosets.len();
                        infoset_index[pi].insert(infoset.clone(), j);
                        let mut seqs = Vec::with_capacity(actions.len());
                        for a in actions {
                            let s = players[pi].labels.len();
                            let label = if lead == 0 {
                                a.clone()
                            } else {
                                format!("{}/{}", players[pi].labels[lead], a)
                            };
                            players[pi].labels.push(label);
                            players[pi].parent.push(Some((j, seqs.len())));
                            players[pi].continuations.push(Vec::new());
                            seqs.push(s);
                        }
                        players[pi].infosets.push(Infoset {
                            id: infoset.clone(),
                            leading_seq: lead,
                            action_labels: actions.clone(),
                            seqs,
                        });
                        players[pi].continuations[lead].push(j);
                        j
                    }
                };
                let seqs = players[pi].infosets[j].seqs.clone();
                for (a, &c) in node.children.iter().enumerate() {
                    cur_seq[pi] = seqs[a];
                    walk(game, c, cur_seq, chance, players, infoset_index, entries)?;
                }
                cur_seq[pi] = lead;
                Ok(())
            }
        }
    }

    let mut cur_seq = vec![0usize; n];
    walk(
        game,
        game.root,
        &mut cur_seq,
        1.0,
        &mut players,
        &mut infoset_index,
        &mut entries,
    )?;

    let mut x_offset = Vec::with_capacity(n);
    let mut nu_offset = Vec::with_capacity(n);
    let mut n0 = 0;
    let mut m0 = 0;
    let mut max_actions = 0;
    for p in &players {
        x_offset.push(n0);
        nu_offset.push(m0);
        n0 += p.n_seqs() - 1;
        m0 += p.infosets.len();
        for iset in &p.infosets {
            max_actions = max_actions.max(iset.action_labels.len());
        }
    }

    Ok(SequenceFormGame {
        game: game.clone(),
        players,
        entries,
        n0,
        m0,
        x_offset,
        nu_offset,
        max_actions,
    })
}

// ---------------------------------------------------------------------------
// Realization plans and perturbations
// ---------------------------------------------------------------------------

/// A realization plan per non-chance player; index 0 carries mass 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationProfile {
    pub masses: Vec<Vec<f64>>,
}

impl RealizationProfile {
    pub fn flow_residual(&self, sfg: &SequenceFormGame) -> f64 {
        let mut worst: f64 = 0.0;
        for (p, masses) in self.masses.iter().enumerate() {
            for iset in &sfg.players[p].infosets {
                let sum: f64 = iset.seqs.iter().map(|&s| masses[s]).sum();
                worst = worst.max((sum - masses[iset.leading_seq]).abs());
            }
        }
        worst
    }

    pub fn min_mass(&self) -> f64 {
        self.masses
            .iter()
            .flat_map(|m| m.iter())
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Flattens non-empty sequence masses into the global x ordering.
    pub fn flat(&self, sfg: &SequenceFormGame) -> Vec<f64> {
        let mut out = Vec::with_capacity(sfg.n0);
        for masses in &self.masses {
            out.extend_from_slice(&masses[1..]);
        }
        out
    }

    pub fn from_flat(sfg: &SequenceFormGame, flat: &[f64]) -> Self {
        let mut masses = Vec::with_capacity(sfg.player_count());
        let mut k = 0;
        for p in &sfg.players {
            let mut v = Vec::with_capacity(p.n_seqs());
            v.push(1.0);
            for _ in 1..p.n_seqs() {
                v.push(flat[k]);
                k += 1;
            }
            masses.push(v);
        }
        RealizationProfile { masses }
    }
}

/// A strictly positive perturbation satisfying the flow equalities, bounded
/// by `eps` on every sequence.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub masses: Vec<Vec<f64>>,
    pub eps: f64,
}

/// Centroid-split perturbation: mass `eps` at the empty sequence, divided
/// evenly among actions at every information set.
pub fn default_perturbation(sfg: &SequenceFormGame, eps: f64) -> Result<Perturbation> {
    let max = 1.0 / sfg.max_actions as f64;
    if !(eps > 0.0 && eps <= max) {
        return Err(Error::InvalidEpsilon { eps, max });
    }
    let mut masses = Vec::with_capacity(sfg.player_count());
    for p in &sfg.players {
        let mut m = vec![0.0; p.n_seqs()];
        m[0] = eps;
        for iset in &p.infosets {
            let share = m[iset.leading_seq] / iset.seqs.len() as f64;
            for &s in &iset.seqs {
                m[s] = share;
            }
        }
        masses.push(m);
    }
    Ok(Perturbation { masses, eps })
}

/// The default perturbation scale 1/max |A|.
pub fn default_eps(sfg: &SequenceFormGame) -> f64 {
    1.0 / sfg.max_actions as f64
}

/// The centroid realization plan: even split at every information set.
pub fn centroid_plan(sfg: &SequenceFormGame) -> RealizationProfile {
    let mut masses = Vec::with_capacity(sfg.player_count());
    for p in &sfg.players {
        let mut m = vec![0.0; p.n_seqs()];
        m[0] = 1.0;
        for iset in &p.infosets {
            let share = m[iset.leading_seq] / iset.seqs.len() as f64;
            for &s in &iset.seqs {
                m[s] = share;
            }
        }
        masses.push(m);
    }
    RealizationProfile { masses }
}

/// Samples a strictly interior plan. With a floor, the mass above the floor
/// is split simplex-uniformly at every information set, so the output
/// dominates the floor componentwise.
pub fn sample_interior_plan(
    sfg: &SequenceFormGame,
    floor: Option<&Perturbation>,
    seed: u64,
) -> RealizationProfile {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut masses = Vec::with_capacity(sfg.player_count());
    for (pi, p) in sfg.players.iter().enumerate() {
        let mut m = vec![0.0; p.n_seqs()];
        m[0] = 1.0;
        for iset in &p.infosets {
            let k = iset.seqs.len();
            // simplex-uniform split via normalized exponentials
            let mut r: Vec<f64> = (0..k)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let sum: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= sum);
            match floor {
                None => {
                    for (&s, ra) in iset.seqs.iter().zip(&r) {
                        m[s] = m[iset.leading_seq] * ra;
                    }
                }
                Some(f) => {
                    let free = m[iset.leading_seq] - f.masses[pi][iset.leading_seq];
                    for (&s, ra) in iset.seqs.iter().zip(&r) {
                        m[s] = f.masses[pi][s] + free * ra;
                    }
                }
            }
        }
        masses.push(m);
    }
    RealizationProfile { masses }
}

// ---------------------------------------------------------------------------
// Payoff evaluation
// ---------------------------------------------------------------------------

/// Sequence-form payoff breakdown at a profile.
#[derive(Debug, Clone)]
pub struct PayoffBreakdown {
    /// Total expected payoff per player.
    pub total: Vec<f64>,
    /// Per player, per sequence w: payoff at w against the others.
    pub at_sequence: Vec<Vec<f64>>,
    /// Per player, per sequence w: payoff from all own sequences extending w.
    pub from_sequence: Vec<Vec<f64>>,
}

/// Adds, per player and own sequence, the entry coefficients weighted by the
/// other players' masses. `out[i][w]` accumulates g_i(w, profile_{-i}).
pub fn accumulate_at_sequence(sfg: &SequenceFormGame, profile: &[Vec<f64>], out: &mut [Vec<f64>]) {
    let n = sfg.player_count();
    for e in &sfg.entries {
        for i in 0..n {
            let mut w = 1.0;
            for (q, &s) in e.seq.iter().enumerate() {
                if q != i {
                    w *= profile[q][s as usize];
                }
            }
            out[i][e.seq[i] as usize] += e.coeff[i] * w;
        }
    }
}

/// Evaluates the three sequence-form payoff views at a realization profile.
pub fn expected_payoffs(sfg: &SequenceFormGame, gamma: &RealizationProfile) -> Result<PayoffBreakdown> {
    if gamma.masses.len() != sfg.player_count()
        || gamma
            .masses
            .iter()
            .zip(&sfg.players)
            .any(|(m, p)| m.len() != p.n_seqs())
    {
        return Err(Error::ShapeMismatch("realization profile".into()));
    }
    let mut at_sequence: Vec<Vec<f64>> = sfg
        .players
        .iter()
        .map(|p| vec![0.0; p.n_seqs()])
        .collect();
    accumulate_at_sequence(sfg, &gamma.masses, &mut at_sequence);

    let total: Vec<f64> = (0..sfg.player_count())
        .map(|i| {
            gamma.masses[i]
                .iter()
                .zip(&at_sequence[i])
                .map(|(g, v)| g * v)
                .sum()
        })
        .collect();

    // from_sequence by backward accumulation: child sequences carry larger
    // indices than the sequences they extend
    let mut from_sequence = Vec::with_capacity(sfg.player_count());
    for (i, p) in sfg.players.iter().enumerate() {
        let mut from = vec![0.0; p.n_seqs()];
        for s in (0..p.n_seqs()).rev() {
            let mut v = gamma.masses[i][s] * at_sequence[i][s];
            for &j in &p.continuations[s] {
                for &cs in &p.infosets[j].seqs {
                    v += from[cs];
                }
            }
            from[s] = v;
        }
        from_sequence.push(from);
    }

    Ok(PayoffBreakdown {
        total,
        at_sequence,
        from_sequence,
    })
}

// ---------------------------------------------------------------------------
// Mixed <-> realization conversions
// ---------------------------------------------------------------------------

/// Maps a mixed profile to its realization plan: each sequence receives the
/// total probability of the pure strategies consistent with it.
pub fn mixed_to_realization(
    sfg: &SequenceFormGame,
    space: &StrategySpace,
    sigma: &MixedStrategyProfile,
) -> Result<RealizationProfile> {
    sigma.validate(space)?;
    let mut masses: Vec<Vec<f64>> = sfg
        .players
        .iter()
        .map(|p| {
            let mut v = vec![0.0; p.n_seqs()];
            v[0] = 1.0;
            v
        })
        .collect();

    for (pi, p) in sfg.players.iter().enumerate() {
        let iset_by_id: std::collections::BTreeMap<&str, usize> = p
            .infosets
            .iter()
            .enumerate()
            .map(|(j, is)| (is.id.as_str(), j))
            .collect();
        for (k, strat) in space.strategies[pi].iter().enumerate() {
            let prob = sigma.probs[pi][k];
            if prob == 0.0 {
                continue;
            }
            // walk the own forest following the strategy
            let mut frontier: Vec<usize> = p.continuations[0].clone();
            while let Some(j) = frontier.pop() {
                let iset = &p.infosets[j];
                let a = match strat.choices.get(&iset.id) {
                    Some(&a) => a,
                    None => {
                        // reachable infoset missing from the strategy domain
                        if iset_by_id.contains_key(iset.id.as_str()) {
                            return Err(Error::ShapeMismatch(format!(
                                "strategy {} of player {} lacks a choice at `{}`",
                                k,
                                pi + 1,
                                iset.id
                            )));
                        }
                        continue;
                    }
                };
                let s = iset.seqs[a];
                masses[pi][s] += prob;
                frontier.extend_from_slice(&p.continuations[s]);
            }
        }
        // sequences skipped by every strategy keep mass; fill non-chosen
        // actions of visited infosets implicitly at zero, then rebuild
        // prefix masses are already consistent by construction.
    }

    Ok(RealizationProfile { masses })
}

/// Inverts an interior plan into the behavioral-product mixed strategy.
pub fn realization_to_mixed(
    sfg: &SequenceFormGame,
    space: &StrategySpace,
    gamma: &RealizationProfile,
) -> Result<MixedStrategyProfile> {
    const BOUNDARY_TOL: f64 = 1e-14;
    for (pi, p) in sfg.players.iter().enumerate() {
        for (s, &m) in gamma.masses[pi].iter().enumerate() {
            if m <= BOUNDARY_TOL {
                return Err(Error::BoundaryPlan {
                    player: pi + 1,
                    label: p.labels[s].clone(),
                    mass: m,
                });
            }
        }
    }
    let mut probs = Vec::with_capacity(sfg.player_count());
    for (pi, p) in sfg.players.iter().enumerate() {
        let iset_by_id: std::collections::BTreeMap<&str, usize> = p
            .infosets
            .iter()
            .enumerate()
            .map(|(j, is)| (is.id.as_str(), j))
            .collect();
        let mut pvec = Vec::with_capacity(space.strategies[pi].len());
        for strat in &space.strategies[pi] {
            let mut prob = 1.0;
            for (iset_id, &a) in &strat.choices {
                let j = *iset_by_id.get(iset_id.as_str()).ok_or_else(|| {
                    Error::ShapeMismatch(format!("unknown information set `{}`", iset_id))
                })?;
                let iset = &p.infosets[j];
                prob *= gamma.masses[pi][iset.seqs[a]] / gamma.masses[pi][iset.leading_seq];
            }
            pvec.push(prob);
        }
        probs.push(pvec);
    }
    Ok(MixedStrategyProfile { probs })
}

// ---------------------------------------------------------------------------
// Best responses and perturbed-game equilibrium check
// ---------------------------------------------------------------------------

/// Per-sequence best-response analysis against a fixed profile.
#[derive(Debug, Clone)]
pub struct BestResponseInfo {
    /// Optimal continuation value per information set.
    pub infoset_value: Vec<Vec<f64>>,
    /// Bracketed value per non-empty sequence: payoff at the sequence plus
    /// the continuation optima.
    pub seq_value: Vec<Vec<f64>>,
    /// Whether the sequence attains its information set's optimum (ties
    /// within tolerance count).
    pub local_best: Vec<Vec<bool>>,
    /// Whether every own step along the sequence is locally optimal.
    pub best_response_seq: Vec<Vec<bool>>,
}

/// Backward-induction best-response analysis with tie tolerance `tie_tol`.
pub fn best_response_analysis(
    sfg: &SequenceFormGame,
    gamma: &RealizationProfile,
    tie_tol: f64,
) -> Result<BestResponseInfo> {
    let payoffs = expected_payoffs(sfg, gamma)?;
    Ok(best_response_from_at(sfg, &payoffs.at_sequence, tie_tol))
}

/// Same as `best_response_analysis` but reusing precomputed per-sequence
/// payoffs.
pub fn best_response_from_at(
    sfg: &SequenceFormGame,
    at_sequence: &[Vec<f64>],
    tie_tol: f64,
) -> BestResponseInfo {
    let n = sfg.player_count();
    let mut infoset_value = Vec::with_capacity(n);
    let mut seq_value = Vec::with_capacity(n);
    let mut local_best = Vec::with_capacity(n);
    let mut best_response_seq = Vec::with_capacity(n);

    for (i, p) in sfg.players.iter().enumerate() {
        let mut values = vec![0.0; p.infosets.len()];
        let mut brackets = vec![0.0; p.n_seqs()];
        // information sets are indexed in first-encounter order, so children
        // always come after their parents
        for j in (0..p.infosets.len()).rev() {
            let iset = &p.infosets[j];
            let mut best = f64::NEG_INFINITY;
            for &s in &iset.seqs {
                let mut v = at_sequence[i][s];
                for &jq in &p.continuations[s] {
                    v += values[jq];
                }
                brackets[s] = v;
                best = best.max(v);
            }
            values[j] = best;
        }
        let mut local = vec![true; p.n_seqs()];
        let mut brs = vec![true; p.n_seqs()];
        for (s, parent) in p.parent.iter().enumerate() {
            if let Some((j, _)) = parent {
                local[s] = brackets[s] >= values[*j] - tie_tol;
                let lead = p.infosets[*j].leading_seq;
                brs[s] = local[s] && brs[lead];
            }
        }
        infoset_value.push(values);
        seq_value.push(brackets);
        local_best.push(local);
        best_response_seq.push(brs);
    }

    BestResponseInfo {
        infoset_value,
        seq_value,
        local_best,
        best_response_seq,
    }
}

/// One violation of the perturbed-game equilibrium condition.
#[derive(Debug, Clone)]
pub struct PerturbedNashViolation {
    pub player: usize,
    pub label: String,
    pub mass: f64,
    pub bound: f64,
    pub optimality_gap: f64,
}

#[derive(Debug, Clone)]
pub struct PerturbedNashReport {
    pub pass: bool,
    pub violations: Vec<PerturbedNashViolation>,
    pub flow_residual: f64,
}

/// Checks the perturbed-game equilibrium condition: every sequence that is
/// not a best response (optimality gap above `tol` somewhere along it) must
/// sit at its perturbation floor.
pub fn perturbed_nash_check(
    sfg: &SequenceFormGame,
    gamma: &RealizationProfile,
    eta: &Perturbation,
    tol: f64,
) -> Result<PerturbedNashReport> {
    let payoffs = expected_payoffs(sfg, gamma)?;
    let br = best_response_from_at(sfg, &payoffs.at_sequence, tol);
    let mut violations = Vec::new();
    for (i, p) in sfg.players.iter().enumerate() {
        for s in 1..p.n_seqs() {
            if br.best_response_seq[i][s] {
                continue;
            }
            let mass = gamma.masses[i][s];
            let bound = eta.masses[i][s];
            if mass > bound + tol {
                let (j, _) = p.parent[s].unwrap();
                violations.push(PerturbedNashViolation {
                    player: i + 1,
                    label: p.labels[s].clone(),
                    mass,
                    bound,
                    optimality_gap: br.infoset_value[i][j] - br.seq_value[i][s],
                });
            }
        }
    }
    Ok(PerturbedNashReport {
        pass: violations.is_empty(),
        violations,
        flow_residual: gamma.flow_residual(sfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{normal_form_payoff, samples, validate_game, StrategySpace, STRATEGY_CAP};

    fn pennies() -> SequenceFormGame {
        build_sequence_form(&samples::matching_pennies()).unwrap()
    }

    #[test]
    fn pennies_counts() {
        let sfg = pennies();
        assert_eq!(sfg.players[0].n_seqs(), 3);
        assert_eq!(sfg.players[1].n_seqs(), 3);
        assert_eq!(sfg.entries.len(), 4);
        assert_eq!(sfg.n0, 4);
        assert_eq!(sfg.m0, 2);
    }

    #[test]
    fn three_action_game_is_all_terminal() {
        let sfg = build_sequence_form(&samples::three_way_choice([1.0, 2.0, 3.0])).unwrap();
        assert_eq!(sfg.players[0].n_seqs(), 4);
        for s in 1..4 {
            assert!(sfg.players[0].is_terminal_seq(s));
        }
    }

    #[test]
    fn uniform_pennies_payoff_is_zero() {
        let sfg = pennies();
        let gamma = centroid_plan(&sfg);
        let payoffs = expected_payoffs(&sfg, &gamma).unwrap();
        assert!(payoffs.total[0].abs() < 1e-15);
        assert!(payoffs.total[1].abs() < 1e-15);
    }

    #[test]
    fn from_sequence_unrolls_one_level() {
        let sfg = build_sequence_form(&samples::two_stage_own()).unwrap();
        let gamma = centroid_plan(&sfg);
        let payoffs = expected_payoffs(&sfg, &gamma).unwrap();
        // g(gamma) equals the sum over root infoset extensions since the
        // empty sequence has no terminal of its own here
        let root_sum: f64 = sfg.players[0].infosets[0]
            .seqs
            .iter()
            .map(|&s| payoffs.from_sequence[0][s])
            .sum();
        assert!((payoffs.total[0] - root_sum).abs() < 1e-12);
        assert!((payoffs.from_sequence[0][0] - payoffs.total[0]).abs() < 1e-12);
    }

    #[test]
    fn payoff_equivalence_against_enumeration() {
        // Lemma-2 style check on a small game with chance
        let game = samples::chance_pair();
        let sfg = build_sequence_form(&game).unwrap();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut sigma = MixedStrategyProfile::uniform(&space);
            for pvec in &mut sigma.probs {
                let mut total = 0.0;
                for q in pvec.iter_mut() {
                    *q = rng.gen::<f64>() + 1e-3;
                    total += *q;
                }
                pvec.iter_mut().for_each(|q| *q /= total);
            }
            let u = normal_form_payoff(&game, &space, &sigma, 10_000).unwrap();
            let gamma = mixed_to_realization(&sfg, &space, &sigma).unwrap();
            let g = expected_payoffs(&sfg, &gamma).unwrap().total;
            for i in 0..u.len() {
                assert!((u[i] - g[i]).abs() <= 1e-9, "u={} g={}", u[i], g[i]);
            }
        }
    }

    #[test]
    fn mixed_to_realization_pure_and_mixed() {
        let game = samples::two_stage_own();
        let sfg = build_sequence_form(&game).unwrap();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        // find the strategy picking a then c
        let k_ac = space.strategies[0]
            .iter()
            .position(|s| {
                s.choices.get("I1") == Some(&0) && s.choices.get("I2") == Some(&0)
            })
            .unwrap();
        let sigma = MixedStrategyProfile::pure(&space, &[k_ac]);
        let gamma = mixed_to_realization(&sfg, &space, &sigma).unwrap();
        let a = sfg.players[0].labels.iter().position(|l| l == "a").unwrap();
        let ac = sfg.players[0].labels.iter().position(|l| l == "a/c").unwrap();
        let b = sfg.players[0].labels.iter().position(|l| l == "b").unwrap();
        assert_eq!(gamma.masses[0][a], 1.0);
        assert_eq!(gamma.masses[0][ac], 1.0);
        assert_eq!(gamma.masses[0][b], 0.0);
        assert!(gamma.flow_residual(&sfg) <= 1e-15);
    }

    #[test]
    fn realization_roundtrip_identity() {
        let game = samples::two_stage_own();
        let sfg = build_sequence_form(&game).unwrap();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        let gamma = sample_interior_plan(&sfg, None, 99);
        let sigma = realization_to_mixed(&sfg, &space, &gamma).unwrap();
        let back = mixed_to_realization(&sfg, &space, &sigma).unwrap();
        for (m1, m2) in gamma.masses.iter().zip(&back.masses) {
            for (a, b) in m1.iter().zip(m2) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn boundary_plan_is_rejected() {
        let game = samples::matching_pennies();
        let sfg = build_sequence_form(&game).unwrap();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        let mut gamma = centroid_plan(&sfg);
        gamma.masses[0][1] = 1.0;
        gamma.masses[0][2] = 0.0;
        assert!(matches!(
            realization_to_mixed(&sfg, &space, &gamma),
            Err(Error::BoundaryPlan { .. })
        ));
    }

    #[test]
    fn centroid_perturbation_shapes() {
        let sfg = pennies();
        let eta = default_perturbation(&sfg, 0.5).unwrap();
        assert_eq!(eta.masses[0][0], 0.5);
        assert_eq!(eta.masses[0][1], 0.25);
        assert_eq!(eta.masses[0][2], 0.25);
        assert!(matches!(
            default_perturbation(&sfg, 0.7),
            Err(Error::InvalidEpsilon { .. })
        ));
    }

    #[test]
    fn sampled_plan_respects_floor() {
        let game = samples::two_stage_own();
        let sfg = build_sequence_form(&game).unwrap();
        let eta = default_perturbation(&sfg, default_eps(&sfg)).unwrap();
        let gamma = sample_interior_plan(&sfg, Some(&eta), 3);
        for (m, f) in gamma.masses[0].iter().zip(&eta.masses[0]).skip(1) {
            assert!(m >= f, "mass {} below floor {}", m, f);
        }
        assert!(gamma.flow_residual(&sfg) <= 1e-12);
        // determinism
        let again = sample_interior_plan(&sfg, Some(&eta), 3);
        assert_eq!(gamma, again);
    }

    #[test]
    fn best_response_flags_simple() {
        let game = samples::dominant_choice();
        let sfg = build_sequence_form(&game).unwrap();
        let gamma = centroid_plan(&sfg);
        let br = best_response_analysis(&sfg, &gamma, 1e-9).unwrap();
        assert!(br.best_response_seq[0][1]); // payoff 2
        assert!(!br.best_response_seq[0][2]); // payoff 1
        // tie case
        let tied = build_sequence_form(&samples::three_way_choice([1.0, 1.0, 0.0])).unwrap();
        let br = best_response_analysis(&tied, &centroid_plan(&tied), 1e-9).unwrap();
        assert!(br.best_response_seq[0][1] && br.best_response_seq[0][2]);
        assert!(!br.best_response_seq[0][3]);
    }

    #[test]
    fn perturbed_nash_check_dominant_game() {
        let game = samples::dominant_choice();
        let sfg = build_sequence_form(&game).unwrap();
        let eta = default_perturbation(&sfg, 0.5).unwrap();
        // mass at the floor on the dominated action: equilibrium
        let mut gamma = centroid_plan(&sfg);
        gamma.masses[0][2] = eta.masses[0][2];
        gamma.masses[0][1] = 1.0 - eta.masses[0][2];
        let report = perturbed_nash_check(&sfg, &gamma, &eta, 1e-9).unwrap();
        assert!(report.pass);
        // excess mass on the dominated action: named violation
        let mut bad = centroid_plan(&sfg);
        bad.masses[0][2] = 0.3;
        bad.masses[0][1] = 0.7;
        let report = perturbed_nash_check(&sfg, &bad, &eta, 1e-9).unwrap();
        assert!(!report.pass);
        assert_eq!(report.violations[0].label, "leave");
    }

    #[test]
    fn generated_games_validate() {
        for g in [
            samples::matching_pennies(),
            samples::selten_2x2(),
            samples::chance_pair(),
            samples::two_stage_own(),
        ] {
            assert!(validate_game(&g).is_ok());
            build_sequence_form(&g).unwrap();
        }
    }
}
