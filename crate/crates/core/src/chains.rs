//! Alternant chain dynamics on a support set: gradient-matched links,
//! levels, horizontal/vertical end classification, cyclic chains and the
//! cyclic cost identity.

use crate::costs::{CostEnv, CostMatrix, GradientPair};
use crate::error::{Error, Result};
use crate::transport::{check_cyclical_monotone, Monotonicity};
use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// How links between support pairs are certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LinkMode {
    /// Gradient equality within an explicit tolerance (default 1e-7).
    Gradient { tol: f64 },
    /// Roundoff-scale gradient equality for supports certified by LP duals:
    /// on exact optimal supports the shared-coordinate gradients agree as
    /// real numbers, so only floating-point noise must be absorbed.
    Exact,
}

impl LinkMode {
    pub fn tolerance(&self) -> f64 {
        match self {
            LinkMode::Gradient { tol } => *tol,
            LinkMode::Exact => 1e-9,
        }
    }
}

impl Default for LinkMode {
    fn default() -> Self {
        LinkMode::Gradient { tol: 1e-7 }
    }
}

/// A support set with the per-pair gradient data the dynamics runs on.
#[derive(Debug, Clone)]
pub struct SupportSet {
    pub pairs: Vec<(usize, usize)>,
    pub gradients: Vec<GradientPair>,
    pub mode: LinkMode,
    pub cost: CostMatrix,
}

impl SupportSet {
    /// Builds from a cost environment; gradients are tangent covectors for
    /// geometric costs and empty (vacuously equal) for tabulated ones.
    pub fn from_env(env: &CostEnv, pairs: Vec<(usize, usize)>, mode: LinkMode) -> Result<Self> {
        let mut sorted = pairs;
        sorted.sort_unstable();
        sorted.dedup();
        let mut gradients = Vec::with_capacity(sorted.len());
        for &(i, j) in &sorted {
            let g = env.link_gradients(i, j)?;
            if g.gx.iter().chain(&g.gy).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInstance(format!(
                    "non-finite gradient at pair ({i},{j})"
                )));
            }
            gradients.push(g);
        }
        Ok(SupportSet {
            pairs: sorted,
            gradients,
            mode,
            cost: env.matrix()?,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn grad_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Typed undirected links between support pairs.
#[derive(Debug, Clone)]
pub struct MatchGraph {
    /// Neighbors via a shared source with matching x-gradients.
    pub x_links: Vec<Vec<usize>>,
    /// Neighbors via a shared target with matching y-gradients.
    pub y_links: Vec<Vec<usize>>,
}

impl MatchGraph {
    pub fn link_count(&self) -> (usize, usize) {
        (
            self.x_links.iter().map(Vec::len).sum::<usize>() / 2,
            self.y_links.iter().map(Vec::len).sum::<usize>() / 2,
        )
    }
}

/// Builds the typed link structure of the support set.
pub fn build_match_graph(s: &SupportSet) -> MatchGraph {
    let n = s.len();
    let tol = s.mode.tolerance();
    let mut x_links = vec![Vec::new(); n];
    let mut y_links = vec![Vec::new(); n];

    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut by_target: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (id, &(i, j)) in s.pairs.iter().enumerate() {
        by_source.entry(i).or_default().push(id);
        by_target.entry(j).or_default().push(id);
    }
    for group in by_source.values() {
        for (a, &p) in group.iter().enumerate() {
            for &q in &group[a + 1..] {
                if grad_close(&s.gradients[p].gx, &s.gradients[q].gx, tol) {
                    x_links[p].push(q);
                    x_links[q].push(p);
                }
            }
        }
    }
    for group in by_target.values() {
        for (a, &p) in group.iter().enumerate() {
            for &q in &group[a + 1..] {
                if grad_close(&s.gradients[p].gy, &s.gradients[q].gy, tol) {
                    y_links[p].push(q);
                    y_links[q].push(p);
                }
            }
        }
    }
    MatchGraph { x_links, y_links }
}

/// Link type of a chain transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// Consecutive pairs share the source (an x-transition).
    SharedSource,
    /// Consecutive pairs share the target (a y-transition).
    SharedTarget,
}

/// End classification of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndKind {
    /// Length-1 chain.
    Trivial,
    /// Last transition shares the target.
    Horizontal,
    /// Last transition shares the source.
    Vertical,
}

/// An explicit alternant chain (simple path in the match graph).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Indices into the support pair list.
    pub pair_ids: Vec<usize>,
    pub links: Vec<LinkKind>,
    pub end: EndKind,
}

/// Per-pair level value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Finite(usize),
    Infinite,
}

impl Level {
    pub fn finite(&self) -> Option<usize> {
        match self {
            Level::Finite(k) => Some(*k),
            Level::Infinite => None,
        }
    }
}

/// Levels plus the horizontal/vertical end flags at each pair's own level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelAssignment {
    pub level: Vec<Level>,
    pub h_flag: Vec<bool>,
    pub v_flag: Vec<bool>,
}

impl LevelAssignment {
    pub fn max_finite(&self) -> usize {
        self.level
            .iter()
            .filter_map(Level::finite)
            .max()
            .unwrap_or(0)
    }

    pub fn has_infinite(&self) -> bool {
        self.level.iter().any(|l| matches!(l, Level::Infinite))
    }
}

// State id: pair p with arrival kind (false = last transition shared the
// source, true = shared the target). Chains are walks over these states,
// and the level of a pair is the longest walk ending at either of its
// states; states on or downstream of an alternating cycle are infinite.
fn state_id(p: usize, arrived_by_target: bool) -> usize {
    2 * p + usize::from(arrived_by_target)
}

struct StateGraph {
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

fn build_state_graph(g: &MatchGraph) -> StateGraph {
    let n = g.x_links.len();
    let mut succ = vec![Vec::new(); 2 * n];
    let mut pred = vec![Vec::new(); 2 * n];
    for p in 0..n {
        // After a source-arrival the next transition must share a target.
        for &q in &g.y_links[p] {
            succ[state_id(p, false)].push(state_id(q, true));
            pred[state_id(q, true)].push(state_id(p, false));
        }
        // After a target-arrival the next transition must share a source.
        for &q in &g.x_links[p] {
            succ[state_id(p, true)].push(state_id(q, false));
            pred[state_id(q, false)].push(state_id(p, true));
        }
    }
    StateGraph { succ, pred }
}

fn tarjan_sccs(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut next_comp = 0usize;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        call.push((start, 0));
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut ei)) = call.last_mut() {
            if *ei < succ[v].len() {
                let w = succ[v][*ei];
                *ei += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Computes per-pair levels: the longest chain ending at the pair, with
/// pairs on or downstream of an alternating cycle flagged infinite.
///
/// The set is assumed c-cyclically monotone as a whole (true for tight sets
/// of optimal duals, whose subsets inherit monotonicity); explicitly emitted
/// chains are monotonicity-checked individually.
pub fn compute_levels(s: &SupportSet, g: &MatchGraph) -> LevelAssignment {
    let n = s.len();
    let sg = build_state_graph(g);
    let comp = tarjan_sccs(&sg.succ);

    let ns = 2 * n;
    let mut cyclic_comp: BTreeSet<usize> = BTreeSet::new();
    for v in 0..ns {
        for &w in &sg.succ[v] {
            if comp[v] == comp[w] {
                cyclic_comp.insert(comp[v]);
            }
        }
    }
    let mut infinite = vec![false; ns];
    let mut queue: Vec<usize> = (0..ns)
        .filter(|&v| cyclic_comp.contains(&comp[v]))
        .collect();
    for &v in &queue {
        infinite[v] = true;
    }
    while let Some(v) = queue.pop() {
        for &w in &sg.succ[v] {
            if !infinite[w] {
                infinite[w] = true;
                queue.push(w);
            }
        }
    }

    // Longest-walk lengths on the acyclic part by memoized DFS over
    // predecessors: a state is reachable in one transition from a fresh
    // pair (length 2) or extends the best walk into a predecessor state.
    let mut len = vec![0usize; ns];
    let mut done = vec![false; ns];
    let mut dfs: Vec<(usize, usize)> = Vec::new();
    for s0 in 0..ns {
        if done[s0] || infinite[s0] || !state_has_arrival(s0, g) {
            continue;
        }
        dfs.push((s0, 0));
        while let Some(&mut (v, ref mut ei)) = dfs.last_mut() {
            if done[v] {
                dfs.pop();
                continue;
            }
            if *ei < sg.pred[v].len() {
                let w = sg.pred[v][*ei];
                *ei += 1;
                if !done[w] && !infinite[w] && state_has_arrival(w, g) {
                    dfs.push((w, 0));
                }
            } else {
                dfs.pop();
                let mut best = 1usize; // bare predecessor pair
                for &w in &sg.pred[v] {
                    if !infinite[w] && state_has_arrival(w, g) {
                        best = best.max(len[w]);
                    }
                }
                len[v] = 1 + best;
                done[v] = true;
            }
        }
    }

    let mut level = Vec::with_capacity(n);
    let mut h_flag = Vec::with_capacity(n);
    let mut v_flag = Vec::with_capacity(n);
    for p in 0..n {
        let sv = state_id(p, false);
        let sh = state_id(p, true);
        if infinite[sv] || infinite[sh] {
            level.push(Level::Infinite);
            h_flag.push(infinite[sh]);
            v_flag.push(infinite[sv]);
            continue;
        }
        let lv = if state_has_arrival(sv, g) { len[sv] } else { 0 };
        let lh = if state_has_arrival(sh, g) { len[sh] } else { 0 };
        let l = lv.max(lh).max(1);
        level.push(Level::Finite(l));
        h_flag.push(l >= 2 && lh == l);
        v_flag.push(l >= 2 && lv == l);
    }
    LevelAssignment {
        level,
        h_flag,
        v_flag,
    }
}

// Whether the state's pair has any link matching the state's arrival kind,
// i.e. whether any chain can actually end in this state.
fn state_has_arrival(state: usize, g: &MatchGraph) -> bool {
    let p = state / 2;
    if state % 2 == 1 {
        !g.y_links[p].is_empty()
    } else {
        !g.x_links[p].is_empty()
    }
}

/// Budget guard for explicit enumeration.
pub const ENUMERATION_BUDGET: u64 = 10_000_000;

/// Explicit chain listing: maximal simple alternating paths up to `l_max`
/// pairs, deduplicated up to reversal, each verified c-cyclically monotone.
/// Also returns the level assignment (computed exactly, independent of
/// `l_max`).
pub fn enumerate_chains(s: &SupportSet, l_max: usize) -> Result<(Vec<Chain>, LevelAssignment)> {
    if l_max < 1 {
        return Err(Error::InvalidParameter("l_max must be at least 1".into()));
    }
    let g = build_match_graph(s);
    let levels = compute_levels(s, &g);

    let n = s.len();
    let mut budget = ENUMERATION_BUDGET;
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut out: Vec<Chain> = Vec::new();

    let mut path: Vec<usize> = Vec::new();
    let mut kinds: Vec<LinkKind> = Vec::new();
    let mut in_path = vec![false; n];

    fn neighbors<'a>(g: &'a MatchGraph, p: usize, kind: LinkKind) -> &'a [usize] {
        match kind {
            LinkKind::SharedSource => &g.x_links[p],
            LinkKind::SharedTarget => &g.y_links[p],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        s: &SupportSet,
        g: &MatchGraph,
        path: &mut Vec<usize>,
        kinds: &mut Vec<LinkKind>,
        in_path: &mut [bool],
        l_max: usize,
        budget: &mut u64,
        seen: &mut BTreeSet<Vec<usize>>,
        out: &mut Vec<Chain>,
    ) -> Result<()> {
        if *budget == 0 {
            return Err(Error::BudgetExceeded(ENUMERATION_BUDGET));
        }
        *budget -= 1;

        let p = *path.last().unwrap();
        let kinds_to_try: &[LinkKind] = match kinds.last() {
            Some(LinkKind::SharedSource) => &[LinkKind::SharedTarget],
            Some(LinkKind::SharedTarget) => &[LinkKind::SharedSource],
            None => &[LinkKind::SharedSource, LinkKind::SharedTarget],
        };
        let mut extended = false;
        if path.len() < l_max {
            for &k in kinds_to_try {
                for &q in neighbors(g, p, k) {
                    if in_path[q] {
                        continue;
                    }
                    extended = true;
                    path.push(q);
                    kinds.push(k);
                    in_path[q] = true;
                    dfs(s, g, path, kinds, in_path, l_max, budget, seen, out)?;
                    in_path[q] = false;
                    kinds.pop();
                    path.pop();
                }
            }
        }
        if !extended {
            // Front-maximality: a chain that another start covers with one
            // more leading pair is not maximal.
            if let Some(&k0) = kinds.first() {
                let opposite = match k0 {
                    LinkKind::SharedSource => LinkKind::SharedTarget,
                    LinkKind::SharedTarget => LinkKind::SharedSource,
                };
                if neighbors(g, path[0], opposite)
                    .iter()
                    .any(|&q| !in_path[q])
                {
                    return Ok(());
                }
            }
            let mut key = path.clone();
            let rev: Vec<usize> = path.iter().rev().copied().collect();
            if rev < key {
                key = rev;
            }
            if seen.insert(key) {
                let end = match kinds.last() {
                    None => EndKind::Trivial,
                    Some(LinkKind::SharedSource) => EndKind::Vertical,
                    Some(LinkKind::SharedTarget) => EndKind::Horizontal,
                };
                let chain_pairs: Vec<(usize, usize)> =
                    path.iter().map(|&id| s.pairs[id]).collect();
                let monotone = matches!(
                    check_cyclical_monotone(&chain_pairs, &s.cost, chain_pairs.len().max(2))?,
                    Monotonicity::Monotone
                );
                if monotone {
                    out.push(Chain {
                        pair_ids: path.clone(),
                        links: kinds.clone(),
                        end,
                    });
                }
            }
        }
        Ok(())
    }

    for start in 0..n {
        path.push(start);
        in_path[start] = true;
        dfs(
            s, &g, &mut path, &mut kinds, &mut in_path, l_max, &mut budget, &mut seen, &mut out,
        )?;
        in_path[start] = false;
        path.pop();
    }

    out.sort_by(|a, b| a.pair_ids.cmp(&b.pair_ids));
    Ok((out, levels))
}

/// A cyclic chain in canonical form: the first transition shares the
/// source, the closing one shares the target, and the id sequence is the
/// lexicographically smallest among phase-preserving rotations and the
/// reflection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CyclicChain {
    pub pair_ids: Vec<usize>,
}

impl CyclicChain {
    pub fn len(&self) -> usize {
        self.pair_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_ids.is_empty()
    }
}

fn canonical_cycle(ids: &[usize]) -> Vec<usize> {
    // Rotations by two preserve "transition 0 shares the source", and so
    // does plain reversal (the last internal transition of an even
    // alternating cycle is again a source link).
    let l = ids.len();
    let mut best: Option<Vec<usize>> = None;
    let mut push = |cand: Vec<usize>| {
        if best.as_ref().map_or(true, |b| &cand < b) {
            best = Some(cand);
        }
    };
    for start in (0..l).step_by(2) {
        let rot: Vec<usize> = (0..l).map(|k| ids[(start + k) % l]).collect();
        push(rot);
    }
    let rev: Vec<usize> = ids.iter().rev().copied().collect();
    for start in (0..l).step_by(2) {
        let rot: Vec<usize> = (0..l).map(|k| rev[(start + k) % l]).collect();
        push(rot);
    }
    best.unwrap()
}

/// Finds all cyclic chains: even-length alternating simple cycles whose
/// projections consist of L/2 distinct sources and L/2 distinct targets and
/// whose pair set is c-cyclically monotone. Each cycle is reported once, in
/// canonical rotation.
pub fn detect_cyclic(s: &SupportSet) -> Result<Vec<CyclicChain>> {
    let g = build_match_graph(s);
    let n = s.len();
    let mut budget = ENUMERATION_BUDGET;
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();

    struct Ctx<'a> {
        s: &'a SupportSet,
        g: &'a MatchGraph,
        budget: &'a mut u64,
        found: &'a mut BTreeSet<Vec<usize>>,
    }

    fn dfs(
        ctx: &mut Ctx,
        start: usize,
        path: &mut Vec<usize>,
        in_path: &mut [bool],
        last_shared_source: bool,
    ) -> Result<()> {
        if *ctx.budget == 0 {
            return Err(Error::BudgetExceeded(ENUMERATION_BUDGET));
        }
        *ctx.budget -= 1;
        let p = *path.last().unwrap();
        let next: Vec<usize> = if last_shared_source {
            ctx.g.y_links[p].clone()
        } else {
            ctx.g.x_links[p].clone()
        };
        for q in next {
            if q == start {
                // The closing transition must share the target to alternate
                // with the opening source transition: it is one only when the
                // arrival at p was via the source, i.e. we are iterating
                // target links here.
                if last_shared_source && path.len() >= 4 && path.len() % 2 == 0 {
                    try_emit(ctx, path)?;
                }
                continue;
            }
            if in_path[q] || q < start {
                continue;
            }
            path.push(q);
            in_path[q] = true;
            dfs(ctx, start, path, in_path, !last_shared_source)?;
            in_path[q] = false;
            path.pop();
        }
        Ok(())
    }

    fn try_emit(ctx: &mut Ctx, path: &[usize]) -> Result<()> {
        let l = path.len();
        let sources: BTreeSet<usize> = path.iter().map(|&id| ctx.s.pairs[id].0).collect();
        let targets: BTreeSet<usize> = path.iter().map(|&id| ctx.s.pairs[id].1).collect();
        if sources.len() != l / 2 || targets.len() != l / 2 {
            return Ok(());
        }
        let chain_pairs: Vec<(usize, usize)> = path.iter().map(|&id| ctx.s.pairs[id]).collect();
        let monotone = matches!(
            check_cyclical_monotone(&chain_pairs, &ctx.s.cost, l.max(2))?,
            Monotonicity::Monotone
        );
        if monotone {
            ctx.found.insert(canonical_cycle(path));
        }
        Ok(())
    }

    for start in 0..n {
        let mut path = vec![start];
        let mut in_path = vec![false; n];
        in_path[start] = true;
        // Cycles are sought with their smallest pair id first and an opening
        // source transition, which prunes rotations during the search.
        let x_neighbors = g.x_links[start].clone();
        for q in x_neighbors {
            if q < start {
                continue;
            }
            path.push(q);
            in_path[q] = true;
            let mut ctx = Ctx {
                s,
                g: &g,
                budget: &mut budget,
                found: &mut found,
            };
            dfs(&mut ctx, start, &mut path, &mut in_path, true)?;
            in_path[q] = false;
            path.pop();
        }
    }

    Ok(found
        .into_iter()
        .map(|pair_ids| CyclicChain { pair_ids })
        .collect())
}

/// The cyclic cost identity: for a cyclic chain with the convention
/// x_2 = x_1, y_L = y_1, the odd-indexed diagonal costs total the same as
/// the shifted off-diagonal ones. Returns the absolute residual; a nonzero
/// value flags a cycle that is not a genuine chain cycle.
pub fn verify_cycle_identity(s: &SupportSet, cycle: &CyclicChain) -> Result<BigRational> {
    let l = cycle.len();
    if l < 4 || l % 2 != 0 {
        return Err(Error::NotCyclic(format!("length {l} is not an even cycle")));
    }
    let ids = &cycle.pair_ids;
    for t in 0..l {
        let a = s.pairs[ids[t]];
        let b = s.pairs[ids[(t + 1) % l]];
        if t % 2 == 0 {
            if a.0 != b.0 || a.1 == b.1 {
                return Err(Error::NotCyclic(format!(
                    "transition {t} must share the source"
                )));
            }
        } else if a.1 != b.1 || a.0 == b.0 {
            return Err(Error::NotCyclic(format!(
                "transition {t} must share the target"
            )));
        }
    }
    let mut diag = BigRational::from_integer(0.into());
    let mut off = BigRational::from_integer(0.into());
    let k = l / 2;
    for t in 0..k {
        let (x_odd, y_odd) = s.pairs[ids[2 * t]];
        diag += s.cost.get(x_odd, y_odd)?;
        let (_, y_next) = s.pairs[ids[2 * t + 1]];
        off += s.cost.get(x_odd, y_next)?;
    }
    let r = diag - off;
    Ok(if r.is_negative() { -r } else { r })
}

/// Maximal chain length over the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaxChain {
    Finite(usize),
    Unbounded,
}

/// Max level over the support; unbounded when alternating cycles make the
/// periodic extension possible.
pub fn max_chain_length(levels: &LevelAssignment) -> MaxChain {
    if levels.has_infinite() {
        MaxChain::Unbounded
    } else {
        MaxChain::Finite(levels.max_finite())
    }
}

/// JSON chain report per the external interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainReport {
    /// Level per support pair, keyed "i,j".
    pub levels: BTreeMap<String, serde_json::Value>,
    pub max_len: serde_json::Value,
    /// Cyclic chains as lists of [i, j] pairs.
    pub cycles: Vec<Vec<(usize, usize)>>,
}

pub fn chain_report(
    s: &SupportSet,
    levels: &LevelAssignment,
    cycles: &[CyclicChain],
) -> ChainReport {
    let mut map = BTreeMap::new();
    for (id, &(i, j)) in s.pairs.iter().enumerate() {
        let v = match levels.level[id] {
            Level::Finite(k) => serde_json::json!(k),
            Level::Infinite => serde_json::json!("inf"),
        };
        map.insert(format!("{i},{j}"), v);
    }
    let max_len = match max_chain_length(levels) {
        MaxChain::Finite(k) => serde_json::json!(k),
        MaxChain::Unbounded => serde_json::json!("inf"),
    };
    ChainReport {
        levels: map,
        max_len,
        cycles: cycles
            .iter()
            .map(|c| c.pair_ids.iter().map(|&id| s.pairs[id]).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostField;
    use crate::geometry::sample_circle;
    use num_traits::Zero;

    fn tabulated_support(rows: &[Vec<f64>], pairs: Vec<(usize, usize)>) -> SupportSet {
        let matrix = CostMatrix::from_f64(rows).unwrap();
        let gradients = pairs
            .iter()
            .map(|_| GradientPair {
                gx: Vec::new(),
                gy: Vec::new(),
            })
            .collect();
        let mut sorted = pairs;
        sorted.sort_unstable();
        SupportSet {
            pairs: sorted,
            gradients,
            mode: LinkMode::default(),
            cost: matrix,
        }
    }

    fn constant_cost(n: usize, m: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0; m]; n]
    }

    #[test]
    fn single_pair_has_no_links() {
        let s = tabulated_support(&constant_cost(2, 2), vec![(0, 0)]);
        let g = build_match_graph(&s);
        assert_eq!(g.link_count(), (0, 0));
        let levels = compute_levels(&s, &g);
        assert_eq!(levels.level, vec![Level::Finite(1)]);
    }

    #[test]
    fn constant_cost_pairs_link_by_shared_source() {
        let s = tabulated_support(&constant_cost(2, 2), vec![(0, 0), (0, 1)]);
        let g = build_match_graph(&s);
        assert_eq!(g.link_count(), (1, 0));
    }

    #[test]
    fn three_pair_chain_levels_and_flags() {
        let s = tabulated_support(&constant_cost(2, 2), vec![(0, 0), (0, 1), (1, 1)]);
        let g = build_match_graph(&s);
        let levels = compute_levels(&s, &g);
        // Pairs sorted: (0,0), (0,1), (1,1). The zigzag can be walked from
        // either end, so the endpoints carry level 3 and the middle 2.
        assert_eq!(
            levels.level,
            vec![Level::Finite(3), Level::Finite(2), Level::Finite(3)]
        );
        // (0,0): its 3-chain arrives via the shared source only.
        assert!(levels.v_flag[0] && !levels.h_flag[0]);
        // (0,1): both arrivals realize its level 2.
        assert!(levels.v_flag[1] && levels.h_flag[1]);
        // (1,1): horizontal end of the full chain.
        assert!(levels.h_flag[2] && !levels.v_flag[2]);

        let (chains, _) = enumerate_chains(&s, 8).unwrap();
        // One maximal chain up to reversal.
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].pair_ids.len(), 3);
    }

    #[test]
    fn no_link_support_is_all_level_one() {
        let s = tabulated_support(&constant_cost(3, 3), vec![(0, 0), (1, 1), (2, 2)]);
        let g = build_match_graph(&s);
        let levels = compute_levels(&s, &g);
        assert!(levels.level.iter().all(|l| *l == Level::Finite(1)));
        let (chains, _) = enumerate_chains(&s, 6).unwrap();
        assert_eq!(chains.len(), 3);
        assert!(chains.iter().all(|c| c.end == EndKind::Trivial));
    }

    #[test]
    fn full_square_support_is_cyclic() {
        let s = tabulated_support(&constant_cost(2, 2), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let g = build_match_graph(&s);
        let levels = compute_levels(&s, &g);
        assert!(levels.level.iter().all(|l| *l == Level::Infinite));
        assert_eq!(max_chain_length(&levels), MaxChain::Unbounded);

        let cycles = detect_cyclic(&s).unwrap();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].len(), 4);

        // Constant cost: the cyclic identity residual vanishes.
        let r = verify_cycle_identity(&s, &cycles[0]).unwrap();
        assert!(r.is_zero());
    }

    #[test]
    fn cycle_identity_flags_non_chain_cycles() {
        // Structurally cyclic, but the costs break the identity: it holds
        // only for genuine chain cycles.
        let s = tabulated_support(
            &[vec![0.0, 1.0], vec![2.0, 1.0]],
            vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        );
        // Pairs sorted: 0:(0,0) 1:(0,1) 2:(1,0) 3:(1,1).
        // Cycle (0,0)-(0,1)-(1,1)-(1,0): opening source link, closing target.
        let cycle = CyclicChain {
            pair_ids: vec![0, 1, 3, 2],
        };
        let r = verify_cycle_identity(&s, &cycle).unwrap();
        assert_eq!(r, BigRational::from_integer(2.into()));

        // detect_cyclic refuses it: the pair set is not monotone.
        let cycles = detect_cyclic(&s).unwrap();
        assert!(cycles.is_empty());
    }

    #[test]
    fn verify_rejects_non_cyclic_input() {
        let s = tabulated_support(&constant_cost(2, 2), vec![(0, 0), (0, 1), (1, 1)]);
        let bad = CyclicChain {
            pair_ids: vec![0, 1, 2],
        };
        assert!(matches!(
            verify_cycle_identity(&s, &bad),
            Err(Error::NotCyclic(_))
        ));
    }

    #[test]
    fn graph_support_has_no_cycles() {
        let s = tabulated_support(&constant_cost(3, 3), vec![(0, 0), (1, 1), (2, 2)]);
        assert!(detect_cyclic(&s).unwrap().is_empty());
    }

    #[test]
    fn alternation_is_strict_in_emitted_chains() {
        let s = tabulated_support(
            &constant_cost(3, 3),
            vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)],
        );
        let (chains, levels) = enumerate_chains(&s, 16).unwrap();
        for c in &chains {
            for w in c.links.windows(2) {
                assert_ne!(w[0], w[1], "links must alternate");
            }
        }
        // The 5-pair zigzag is one maximal chain; its ends carry level 5.
        assert!(chains.iter().any(|c| c.pair_ids.len() == 5));
        assert_eq!(levels.max_finite(), 5);
    }

    #[test]
    fn gradient_tolerance_separates_links() {
        // Two generic targets split from one source on the circle: the
        // tangential gradients differ, so honest tolerances refuse to link.
        let circle = sample_circle(12, 1.0, [0.0, 0.0]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = CostEnv::new(&field, &circle, &circle);
        let s = SupportSet::from_env(&env, vec![(0, 1), (0, 2)], LinkMode::Exact).unwrap();
        let g = build_match_graph(&s);
        assert_eq!(g.link_count(), (0, 0));

        // Targets split along the normal at the shared source (the point
        // itself and its antipode) have equal tangential gradients, so the
        // link appears even at roundoff tolerance.
        let s = SupportSet::from_env(&env, vec![(3, 3), (3, 9)], LinkMode::Exact).unwrap();
        let g = build_match_graph(&s);
        assert_eq!(g.link_count(), (1, 0));
    }

    #[test]
    fn chain_report_shape() {
        let s = tabulated_support(&constant_cost(2, 2), vec![(0, 0), (0, 1)]);
        let g = build_match_graph(&s);
        let levels = compute_levels(&s, &g);
        let report = chain_report(&s, &levels, &[]);
        assert_eq!(report.levels.len(), 2);
        assert_eq!(report.max_len, serde_json::json!(2));
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"0,1\""));
    }
}
