//! Extensive-form game trees: representation, validation, reduced-normal-form
//! enumeration, and expected payoffs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Default cap on reduced-strategy enumeration.
pub const STRATEGY_CAP: u128 = 1_000_000;

#[derive(Debug, Clone)]
pub enum NodeKind {
    Chance {
        probs: Vec<f64>,
    },
    Decision {
        /// 1-based player index.
        player: usize,
        infoset: String,
        actions: Vec<String>,
    },
    Terminal {
        payoffs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        matches!(self.kind, NodeKind::Terminal { .. })
    }
}

/// A finite extensive-form game stored as an indexed node arena.
///
/// Immutable after construction; validation and all downstream structure
/// (sequence form, strategy enumeration) treat it as read-only.
#[derive(Debug, Clone)]
pub struct ExtensiveFormGame {
    pub player_count: usize,
    pub root: NodeId,
    pub nodes: Vec<Node>,
    /// Per-player (min, max) over terminal payoffs.
    pub payoff_range: Vec<(f64, f64)>,
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

/// Nested node description matching the on-disk JSON format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeSpec {
    Chance {
        probs: Vec<f64>,
        children: Vec<NodeSpec>,
    },
    Decision {
        player: usize,
        infoset: String,
        actions: Vec<String>,
        children: Vec<NodeSpec>,
    },
    Terminal {
        payoffs: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameSpec {
    pub players: usize,
    pub root: NodeSpec,
}

impl ExtensiveFormGame {
    pub fn from_spec(spec: &GameSpec) -> Result<Self> {
        if spec.players == 0 {
            return Err(Error::InvalidGame("players must be positive".into()));
        }
        let mut nodes = Vec::new();
        let root = add_node(&mut nodes, &spec.root, None, spec.players)?;
        let mut payoff_range = vec![(f64::INFINITY, f64::NEG_INFINITY); spec.players];
        for node in &nodes {
            if let NodeKind::Terminal { payoffs } = &node.kind {
                for (i, p) in payoffs.iter().enumerate() {
                    payoff_range[i].0 = payoff_range[i].0.min(*p);
                    payoff_range[i].1 = payoff_range[i].1.max(*p);
                }
            }
        }
        Ok(ExtensiveFormGame {
            player_count: spec.players,
            root,
            nodes,
            payoff_range,
        })
    }

    pub fn to_spec(&self) -> GameSpec {
        GameSpec {
            players: self.player_count,
            root: node_to_spec(self, self.root),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: GameSpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_spec())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn terminal_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_terminal()).count()
    }
}

fn add_node(
    nodes: &mut Vec<Node>,
    spec: &NodeSpec,
    parent: Option<NodeId>,
    players: usize,
) -> Result<NodeId> {
    let id = nodes.len();
    match spec {
        NodeSpec::Terminal { payoffs } => {
            if payoffs.len() != players {
                return Err(Error::InvalidGame(format!(
                    "terminal node {} has {} payoffs for {} players",
                    id,
                    payoffs.len(),
                    players
                )));
            }
            nodes.push(Node {
                kind: NodeKind::Terminal {
                    payoffs: payoffs.clone(),
                },
                parent,
                children: Vec::new(),
            });
            Ok(id)
        }
        NodeSpec::Chance { probs, children } => {
            if probs.len() != children.len() {
                return Err(Error::InvalidGame(format!(
                    "chance node {}: {} probs vs {} children",
                    id,
                    probs.len(),
                    children.len()
                )));
            }
            nodes.push(Node {
                kind: NodeKind::Chance {
                    probs: probs.clone(),
                },
                parent,
                children: Vec::new(),
            });
            let mut child_ids = Vec::with_capacity(children.len());
            for ch in children {
                child_ids.push(add_node(nodes, ch, Some(id), players)?);
            }
            nodes[id].children = child_ids;
            Ok(id)
        }
        NodeSpec::Decision {
            player,
            infoset,
            actions,
            children,
        } => {
            if actions.len() != children.len() {
                return Err(Error::InvalidGame(format!(
                    "decision node {}: {} actions vs {} children",
                    id,
                    actions.len(),
                    children.len()
                )));
            }
            nodes.push(Node {
                kind: NodeKind::Decision {
                    player: *player,
                    infoset: infoset.clone(),
                    actions: actions.clone(),
                },
                parent,
                children: Vec::new(),
            });
            let mut child_ids = Vec::with_capacity(children.len());
            for ch in children {
                child_ids.push(add_node(nodes, ch, Some(id), players)?);
            }
            nodes[id].children = child_ids;
            Ok(id)
        }
    }
}

fn node_to_spec(game: &ExtensiveFormGame, id: NodeId) -> NodeSpec {
    let node = &game.nodes[id];
    match &node.kind {
        NodeKind::Terminal { payoffs } => NodeSpec::Terminal {
            payoffs: payoffs.clone(),
        },
        NodeKind::Chance { probs } => NodeSpec::Chance {
            probs: probs.clone(),
            children: node
                .children
                .iter()
                .map(|&c| node_to_spec(game, c))
                .collect(),
        },
        NodeKind::Decision {
            player,
            infoset,
            actions,
        } => NodeSpec::Decision {
            player: *player,
            infoset: infoset.clone(),
            actions: actions.clone(),
            children: node
                .children
                .iter()
                .map(|&c| node_to_spec(game, c))
                .collect(),
        },
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    TreeShape,
    PlayerRange,
    ActionMismatch,
    ChanceProbability,
    PerfectRecall,
    InfosetOwnership,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A player's record of their own experience along a history: the
/// (information set, action index) pairs at the player's own moves.
fn own_record(game: &ExtensiveFormGame, player: usize, node: NodeId) -> Vec<(String, usize)> {
    let mut rec = Vec::new();
    let mut cur = node;
    while let Some(parent) = game.nodes[cur].parent {
        if let NodeKind::Decision {
            player: p,
            infoset,
            ..
        } = &game.nodes[parent].kind
        {
            if *p == player {
                let action = game.nodes[parent]
                    .children
                    .iter()
                    .position(|&c| c == cur)
                    .expect("child link");
                rec.push((infoset.clone(), action));
            }
        }
        cur = parent;
    }
    rec.reverse();
    rec
}

/// Checks tree shape, chance probabilities, information-set consistency, and
/// perfect recall. Violations are data, not failures.
pub fn validate_game(game: &ExtensiveFormGame) -> ValidationReport {
    let mut report = ValidationReport::default();

    // arena consistency
    for (id, node) in game.nodes.iter().enumerate() {
        for &c in &node.children {
            if c >= game.nodes.len() || game.nodes[c].parent != Some(id) {
                report.violations.push(Violation {
                    kind: ViolationKind::TreeShape,
                    message: format!("node {} has inconsistent child link {}", id, c),
                });
            }
        }
        if !node.is_terminal() && node.children.is_empty() {
            report.violations.push(Violation {
                kind: ViolationKind::TreeShape,
                message: format!("non-terminal node {} has no children", id),
            });
        }
    }

    // chance probabilities: strictly positive, summing to one
    for (id, node) in game.nodes.iter().enumerate() {
        if let NodeKind::Chance { probs } = &node.kind {
            if probs.iter().any(|&p| p <= 0.0) {
                report.violations.push(Violation {
                    kind: ViolationKind::ChanceProbability,
                    message: format!("chance node {} has a non-positive probability", id),
                });
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                report.violations.push(Violation {
                    kind: ViolationKind::ChanceProbability,
                    message: format!("chance node {} probabilities sum to {}", id, sum),
                });
            }
        }
    }

    // information sets: single owner, identical action lists, perfect recall
    let mut infosets: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
    for (id, node) in game.nodes.iter().enumerate() {
        if let NodeKind::Decision {
            player, infoset, ..
        } = &node.kind
        {
            if *player == 0 || *player > game.player_count {
                report.violations.push(Violation {
                    kind: ViolationKind::PlayerRange,
                    message: format!("node {} has player {} out of range", id, player),
                });
            }
            infosets.entry(infoset.as_str()).or_default().push(id);
        }
    }
    for (iset, members) in &infosets {
        let first = members[0];
        let (p0, a0) = match &game.nodes[first].kind {
            NodeKind::Decision {
                player, actions, ..
            } => (*player, actions.clone()),
            _ => unreachable!(),
        };
        let mut consistent = true;
        for &m in &members[1..] {
            if let NodeKind::Decision {
                player, actions, ..
            } = &game.nodes[m].kind
            {
                if *player != p0 {
                    report.violations.push(Violation {
                        kind: ViolationKind::InfosetOwnership,
                        message: format!("information set `{}` spans players {} and {}", iset, p0, player),
                    });
                    consistent = false;
                }
                if *actions != a0 {
                    report.violations.push(Violation {
                        kind: ViolationKind::ActionMismatch,
                        message: format!("information set `{}` has mismatched action lists", iset),
                    });
                }
            }
        }
        if !consistent {
            continue;
        }
        let rec0 = own_record(game, p0, first);
        for &m in &members[1..] {
            if own_record(game, p0, m) != rec0 {
                report.violations.push(Violation {
                    kind: ViolationKind::PerfectRecall,
                    message: format!(
                        "information set `{}` merges histories with different own records",
                        iset
                    ),
                });
                break;
            }
        }
    }

    report
}

// ---------------------------------------------------------------------------
// Reduced normal form
// ---------------------------------------------------------------------------

/// A reduced pure strategy: an action choice at every own information set
/// that remains reachable given the strategy's earlier own choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedPureStrategy {
    pub player: usize,
    /// infoset id -> chosen action index, only on the reachable domain.
    pub choices: BTreeMap<String, usize>,
}

impl ReducedPureStrategy {
    /// Render as `infoset=action;...` in a deterministic infoset order.
    pub fn label(&self, order: &[String], actions: &BTreeMap<String, Vec<String>>) -> String {
        let mut parts = Vec::new();
        for iset in order {
            if let Some(&a) = self.choices.get(iset) {
                parts.push(format!("{}={}", iset, actions[iset][a]));
            }
        }
        parts.join(";")
    }
}

/// Own-move structure of one player: information sets with, per action, the
/// information sets that can follow next among the player's own moves.
#[derive(Debug, Clone)]
pub struct OwnForest {
    /// Infoset ids in first-encounter (depth-first) order.
    pub order: Vec<String>,
    pub actions: BTreeMap<String, Vec<String>>,
    /// Per infoset (by order index), per action: next own infoset order-indices.
    pub next: Vec<Vec<Vec<usize>>>,
    /// Infosets reachable before any own move.
    pub roots: Vec<usize>,
}

/// Builds the own-move forest for `player` by a depth-first walk in file
/// action order.
pub fn own_forest(game: &ExtensiveFormGame, player: usize) -> Result<OwnForest> {
    struct Walker<'g> {
        game: &'g ExtensiveFormGame,
        player: usize,
        order: Vec<String>,
        index: BTreeMap<String, usize>,
        actions: BTreeMap<String, Vec<String>>,
        next: Vec<Vec<Vec<usize>>>,
        roots: Vec<usize>,
    }

    impl Walker<'_> {
        fn visit(&mut self, id: NodeId, last: Option<(usize, usize)>) {
            let node = &self.game.nodes[id];
            if let NodeKind::Decision {
                player: p,
                infoset,
                actions: acts,
            } = &node.kind
            {
                if *p == self.player {
                    let j = match self.index.get(infoset) {
                        Some(&j) => j,
                        None => {
                            let j = self.order.len();
                            self.index.insert(infoset.clone(), j);
                            self.order.push(infoset.clone());
                            self.actions.insert(infoset.clone(), acts.clone());
                            self.next.push(vec![Vec::new(); acts.len()]);
                            j
                        }
                    };
                    match last {
                        None => {
                            if !self.roots.contains(&j) {
                                self.roots.push(j);
                            }
                        }
                        Some((pj, pa)) => {
                            if !self.next[pj][pa].contains(&j) {
                                self.next[pj][pa].push(j);
                            }
                        }
                    }
                    let children = node.children.clone();
                    for (a, c) in children.into_iter().enumerate() {
                        self.visit(c, Some((j, a)));
                    }
                    return;
                }
            }
            let children = node.children.clone();
            for c in children {
                self.visit(c, last);
            }
        }
    }

    let mut w = Walker {
        game,
        player,
        order: Vec::new(),
        index: BTreeMap::new(),
        actions: BTreeMap::new(),
        next: Vec::new(),
        roots: Vec::new(),
    };
    w.visit(game.root, None);
    Ok(OwnForest {
        order: w.order,
        actions: w.actions,
        next: w.next,
        roots: w.roots,
    })
}

impl OwnForest {
    fn count_from(&self, j: usize, memo: &mut [Option<u128>]) -> u128 {
        if let Some(v) = memo[j] {
            return v;
        }
        let mut total: u128 = 0;
        for nexts in &self.next[j] {
            let mut prod: u128 = 1;
            for &jq in nexts {
                prod = prod.saturating_mul(self.count_from(jq, memo));
            }
            total = total.saturating_add(prod);
        }
        memo[j] = Some(total);
        total
    }

    /// Number of reduced pure strategies.
    pub fn strategy_count(&self) -> u128 {
        let mut memo = vec![None; self.order.len()];
        self.roots
            .iter()
            .map(|&j| self.count_from(j, &mut memo))
            .fold(1u128, |acc, c| acc.saturating_mul(c))
    }
}

/// Enumerates all reduced pure strategies of `player` in a deterministic
/// order, failing with `CombinatorialLimit` above `cap`.
pub fn reduced_pure_strategies(
    game: &ExtensiveFormGame,
    player: usize,
    cap: u128,
) -> Result<Vec<ReducedPureStrategy>> {
    let forest = own_forest(game, player)?;
    let count = forest.strategy_count();
    if count > cap {
        return Err(Error::CombinatorialLimit { count, cap });
    }

    fn expand(
        forest: &OwnForest,
        frontier: &[usize],
        partial: &mut BTreeMap<String, usize>,
        out: &mut Vec<BTreeMap<String, usize>>,
    ) {
        match frontier.split_first() {
            None => out.push(partial.clone()),
            Some((&j, rest)) => {
                let iset = forest.order[j].clone();
                for a in 0..forest.actions[&iset].len() {
                    partial.insert(iset.clone(), a);
                    let mut new_frontier: Vec<usize> = forest.next[j][a].clone();
                    new_frontier.extend_from_slice(rest);
                    expand(forest, &new_frontier, partial, out);
                }
                partial.remove(&iset);
            }
        }
    }

    let mut maps = Vec::new();
    expand(
        &forest,
        &forest.roots,
        &mut BTreeMap::new(),
        &mut maps,
    );
    Ok(maps
        .into_iter()
        .map(|choices| ReducedPureStrategy { player, choices })
        .collect())
}

/// The reduced strategy space of every player plus shared label metadata.
#[derive(Debug, Clone)]
pub struct StrategySpace {
    pub strategies: Vec<Vec<ReducedPureStrategy>>,
    pub forests: Vec<OwnForest>,
}

impl StrategySpace {
    pub fn new(game: &ExtensiveFormGame, cap: u128) -> Result<Self> {
        let mut strategies = Vec::new();
        let mut forests = Vec::new();
        for player in 1..=game.player_count {
            strategies.push(reduced_pure_strategies(game, player, cap)?);
            forests.push(own_forest(game, player)?);
        }
        Ok(StrategySpace {
            strategies,
            forests,
        })
    }

    pub fn joint_count(&self) -> u128 {
        self.strategies
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }

    pub fn label(&self, player: usize, idx: usize) -> String {
        let f = &self.forests[player - 1];
        self.strategies[player - 1][idx].label(&f.order, &f.actions)
    }
}

// ---------------------------------------------------------------------------
// Payoffs
// ---------------------------------------------------------------------------

/// A mixed strategy per player over the reduced pure strategies of a
/// `StrategySpace`, aligned by index.
#[derive(Debug, Clone)]
pub struct MixedStrategyProfile {
    pub probs: Vec<Vec<f64>>,
}

impl MixedStrategyProfile {
    pub fn pure(space: &StrategySpace, picks: &[usize]) -> Self {
        let probs = space
            .strategies
            .iter()
            .zip(picks)
            .map(|(list, &k)| {
                let mut v = vec![0.0; list.len()];
                v[k] = 1.0;
                v
            })
            .collect();
        MixedStrategyProfile { probs }
    }

    pub fn uniform(space: &StrategySpace) -> Self {
        let probs = space
            .strategies
            .iter()
            .map(|list| vec![1.0 / list.len() as f64; list.len()])
            .collect();
        MixedStrategyProfile { probs }
    }

    pub fn validate(&self, space: &StrategySpace) -> Result<()> {
        if self.probs.len() != space.strategies.len() {
            return Err(Error::ShapeMismatch("player count".into()));
        }
        for (i, (p, s)) in self.probs.iter().zip(&space.strategies).enumerate() {
            if p.len() != s.len() {
                return Err(Error::ShapeMismatch(format!(
                    "player {} has {} probabilities for {} strategies",
                    i + 1,
                    p.len(),
                    s.len()
                )));
            }
            if p.iter().any(|&q| q < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::ShapeMismatch(format!(
                    "player {} probabilities are not a distribution",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Expected payoff of a joint pure reduced profile, by tree walk with chance
/// weighting.
pub fn pure_profile_payoff(
    game: &ExtensiveFormGame,
    profile: &[&ReducedPureStrategy],
) -> Result<Vec<f64>> {
    if profile.len() != game.player_count {
        return Err(Error::ShapeMismatch("pure profile size".into()));
    }
    let mut out = vec![0.0; game.player_count];
    let mut stack: Vec<(NodeId, f64)> = vec![(game.root, 1.0)];
    while let Some((id, w)) = stack.pop() {
        let node = &game.nodes[id];
        match &node.kind {
            NodeKind::Terminal { payoffs } => {
                for (o, p) in out.iter_mut().zip(payoffs) {
                    *o += w * p;
                }
            }
            NodeKind::Chance { probs } => {
                for (&c, &p) in node.children.iter().zip(probs) {
                    stack.push((c, w * p));
                }
            }
            NodeKind::Decision {
                player, infoset, ..
            } => {
                let strat = profile[player - 1];
                let a = strat.choices.get(infoset).copied().ok_or_else(|| {
                    Error::ShapeMismatch(format!(
                        "strategy of player {} does not cover information set `{}`",
                        player, infoset
                    ))
                })?;
                stack.push((node.children[a], w));
            }
        }
    }
    Ok(out)
}

/// Expected payoffs of a mixed profile by enumeration of the joint reduced
/// pure profiles. This is the oracle route: exponential, capped.
pub fn normal_form_payoff(
    game: &ExtensiveFormGame,
    space: &StrategySpace,
    profile: &MixedStrategyProfile,
    cap: u128,
) -> Result<Vec<f64>> {
    profile.validate(space)?;
    let joint = space.joint_count();
    if joint > cap {
        return Err(Error::CombinatorialLimit { count: joint, cap });
    }
    let n = game.player_count;
    let mut out = vec![0.0; n];
    let mut picks = vec![0usize; n];
    loop {
        let mut w = 1.0;
        for i in 0..n {
            w *= profile.probs[i][picks[i]];
        }
        if w != 0.0 {
            let refs: Vec<&ReducedPureStrategy> = (0..n)
                .map(|i| &space.strategies[i][picks[i]])
                .collect();
            let u = pure_profile_payoff(game, &refs)?;
            for (o, ui) in out.iter_mut().zip(&u) {
                *o += w * ui;
            }
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                return Ok(out);
            }
            picks[i] += 1;
            if picks[i] < space.strategies[i].len() {
                break;
            }
            picks[i] = 0;
            i += 1;
        }
    }
}

/// Payoff of player `i` for pure strategy index `k` against the others'
/// mixed profile.
pub fn payoff_vs_mixed(
    game: &ExtensiveFormGame,
    space: &StrategySpace,
    profile: &MixedStrategyProfile,
    player: usize,
    k: usize,
    cap: u128,
) -> Result<f64> {
    let mut point = profile.clone();
    point.probs[player - 1] = vec![0.0; space.strategies[player - 1].len()];
    point.probs[player - 1][k] = 1.0;
    Ok(normal_form_payoff(game, space, &point, cap)?[player - 1])
}

// ---------------------------------------------------------------------------
// Sample games
// ---------------------------------------------------------------------------

/// Small hand-built games used by tests and examples.
pub mod samples {
    use super::*;

    fn decision(player: usize, infoset: &str, actions: &[&str], children: Vec<NodeSpec>) -> NodeSpec {
        NodeSpec::Decision {
            player,
            infoset: infoset.to_string(),
            actions: actions.iter().map(|s| s.to_string()).collect(),
            children,
        }
    }

    fn terminal(payoffs: &[f64]) -> NodeSpec {
        NodeSpec::Terminal {
            payoffs: payoffs.to_vec(),
        }
    }

    /// Matching pennies: player 1 wins on a match.
    pub fn matching_pennies() -> ExtensiveFormGame {
        let spec = GameSpec {
            players: 2,
            root: decision(
                1,
                "P1",
                &["H", "T"],
                vec![
                    decision(
                        2,
                        "P2",
                        &["h", "t"],
                        vec![terminal(&[1.0, -1.0]), terminal(&[-1.0, 1.0])],
                    ),
                    decision(
                        2,
                        "P2",
                        &["h", "t"],
                        vec![terminal(&[-1.0, 1.0]), terminal(&[1.0, -1.0])],
                    ),
                ],
            ),
        };
        ExtensiveFormGame::from_spec(&spec).unwrap()
    }

    /// 2x2 coordination game with payoffs (1,1) at (T,L) and (0,0) elsewhere.
    /// (B,R) is Nash but uses weakly dominated strategies.
    pub fn selten_2x2() -> ExtensiveFormGame {
        let spec = GameSpec {
            players: 2,
            root: decision(
                1,
                "P1",
                &["T", "B"],
                vec![
                    decision(
                        2,
                        "P2",
                        &["L", "R"],
                        vec![terminal(&[1.0, 1.0]), terminal(&[0.0, 0.0])],
                    ),
                    decision(
                        2,
                        "P2",
                        &["L", "R"],
                        vec![terminal(&[0.0, 0.0]), terminal(&[0.0, 0.0])],
                    ),
                ],
            ),
        };
        ExtensiveFormGame::from_spec(&spec).unwrap()
    }

    /// One decision node, two actions, payoffs (2) and (1).
    pub fn dominant_choice() -> ExtensiveFormGame {
        let spec = GameSpec {
            players: 1,
            root: decision(
                1,
                "P1",
                &["take", "leave"],
                vec![terminal(&[2.0]), terminal(&[1.0])],
            ),
        };
        ExtensiveFormGame::from_spec(&spec).unwrap()
    }

    /// Single player, one information set, three actions.
    pub fn three_way_choice(payoffs: [f64; 3]) -> ExtensiveFormGame {
        let spec = GameSpec {
            players: 1,
            root: decision(
                1,
                "P1",
                &["a", "b", "c"],
                vec![
                    terminal(&[payoffs[0]]),
                    terminal(&[payoffs[1]]),
                    terminal(&[payoffs[2]]),
                ],
            ),
        };
        ExtensiveFormGame::from_spec(&spec).unwrap()
    }

    /// Chance root (0.5/0.5) leading to two 1-player decisions.
    pub fn chance_pair() -> ExtensiveFormGame {
        let spec = GameSpec {
            players: 1,
            root: NodeSpec::Chance {
                probs: vec![0.5, 0.5],
                children: vec![
                    decision(
                        1,
                        "P1a",
                        &["l", "r"],
                        vec![terminal(&[4.0]), terminal(&[0.0])],
                    ),
                    decision(
                        1,
                        "P1b",
                        &["l", "r"],
                        vec![terminal(&[1.0]), terminal(&[3.0])],
                    ),
                ],
            },
        };
        ExtensiveFormGame::from_spec(&spec).unwrap()
    }

    /// Player 1 chooses a (continue to a second own decision) or b (stop).
    pub fn two_stage_own() -> ExtensiveFormGame {
        let spec = GameSpec {
            players: 1,
            root: decision(
                1,
                "I1",
                &["a", "b"],
                vec![
                    decision(1, "I2", &["c", "d"], vec![terminal(&[3.0]), terminal(&[1.0])]),
                    terminal(&[2.0]),
                ],
            ),
        };
        ExtensiveFormGame::from_spec(&spec).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_simultaneous_game() {
        let game = samples::matching_pennies();
        assert!(validate_game(&game).is_ok());
    }

    #[test]
    fn detects_perfect_recall_violation() {
        // player 1 moves twice; second information set merges histories that
        // differ in player 1's own first action
        let spec = GameSpec {
            players: 1,
            root: NodeSpec::Decision {
                player: 1,
                infoset: "first".into(),
                actions: vec!["x".into(), "y".into()],
                children: vec![
                    NodeSpec::Decision {
                        player: 1,
                        infoset: "merged".into(),
                        actions: vec!["l".into(), "r".into()],
                        children: vec![
                            NodeSpec::Terminal { payoffs: vec![0.0] },
                            NodeSpec::Terminal { payoffs: vec![1.0] },
                        ],
                    },
                    NodeSpec::Decision {
                        player: 1,
                        infoset: "merged".into(),
                        actions: vec!["l".into(), "r".into()],
                        children: vec![
                            NodeSpec::Terminal { payoffs: vec![2.0] },
                            NodeSpec::Terminal { payoffs: vec![3.0] },
                        ],
                    },
                ],
            },
        };
        let game = ExtensiveFormGame::from_spec(&spec).unwrap();
        let report = validate_game(&game);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::PerfectRecall && v.message.contains("merged")));
    }

    #[test]
    fn detects_bad_chance_probs() {
        let spec = GameSpec {
            players: 1,
            root: NodeSpec::Chance {
                probs: vec![0.6, 0.6],
                children: vec![
                    NodeSpec::Terminal { payoffs: vec![1.0] },
                    NodeSpec::Terminal { payoffs: vec![0.0] },
                ],
            },
        };
        let game = ExtensiveFormGame::from_spec(&spec).unwrap();
        let report = validate_game(&game);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::ChanceProbability));
    }

    #[test]
    fn reduced_strategy_counts() {
        let pennies = samples::matching_pennies();
        assert_eq!(reduced_pure_strategies(&pennies, 1, STRATEGY_CAP).unwrap().len(), 2);
        assert_eq!(reduced_pure_strategies(&pennies, 2, STRATEGY_CAP).unwrap().len(), 2);

        // I1 with actions a (leads to I2) and b (stops): a·c, a·d, b
        let two_stage = samples::two_stage_own();
        let strats = reduced_pure_strategies(&two_stage, 1, STRATEGY_CAP).unwrap();
        assert_eq!(strats.len(), 3);
        let with_both = strats.iter().filter(|s| s.choices.len() == 2).count();
        let with_one = strats.iter().filter(|s| s.choices.len() == 1).count();
        assert_eq!((with_both, with_one), (2, 1));
    }

    #[test]
    fn strategy_cap_is_enforced() {
        let game = samples::matching_pennies();
        let err = reduced_pure_strategies(&game, 1, 1).unwrap_err();
        assert!(matches!(err, Error::CombinatorialLimit { count: 2, cap: 1 }));
    }

    #[test]
    fn pennies_pure_and_uniform_payoffs() {
        let game = samples::matching_pennies();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        let hh = MixedStrategyProfile::pure(&space, &[0, 0]);
        assert_eq!(
            normal_form_payoff(&game, &space, &hh, 10_000).unwrap(),
            vec![1.0, -1.0]
        );
        let uniform = MixedStrategyProfile::uniform(&space);
        let u = normal_form_payoff(&game, &space, &uniform, 10_000).unwrap();
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
    }

    #[test]
    fn chance_payoff_matches_hand_computation() {
        let game = samples::chance_pair();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        // four strategies: (l,l), (l,r), (r,l), (r,r) in some order;
        // best is l at P1a and r at P1b: 0.5*4 + 0.5*3 = 3.5
        let best = (0..space.strategies[0].len())
            .map(|k| {
                let prof = MixedStrategyProfile::pure(&space, &[k]);
                normal_form_payoff(&game, &space, &prof, 10_000).unwrap()[0]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((best - 3.5).abs() < 1e-12);
    }

    #[test]
    fn payoff_is_affine_in_one_players_mix() {
        let game = samples::matching_pennies();
        let space = StrategySpace::new(&game, STRATEGY_CAP).unwrap();
        let mut a = MixedStrategyProfile::uniform(&space);
        a.probs[0] = vec![0.9, 0.1];
        let mut b = a.clone();
        b.probs[0] = vec![0.2, 0.8];
        let lambda = 0.3;
        let mut blend = a.clone();
        for k in 0..2 {
            blend.probs[0][k] = lambda * a.probs[0][k] + (1.0 - lambda) * b.probs[0][k];
        }
        let ua = normal_form_payoff(&game, &space, &a, 10_000).unwrap();
        let ub = normal_form_payoff(&game, &space, &b, 10_000).unwrap();
        let ubl = normal_form_payoff(&game, &space, &blend, 10_000).unwrap();
        for i in 0..2 {
            assert!((ubl[i] - (lambda * ua[i] + (1.0 - lambda) * ub[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn json_roundtrip() {
        let game = samples::selten_2x2();
        let text = serde_json::to_string(&game.to_spec()).unwrap();
        let spec: GameSpec = serde_json::from_str(&text).unwrap();
        let back = ExtensiveFormGame::from_spec(&spec).unwrap();
        assert_eq!(back.nodes.len(), game.nodes.len());
        assert_eq!(back.payoff_range, game.payoff_range);
    }
}
