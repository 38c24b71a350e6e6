//! Numbered limb systems: level classes over a support set, the
//! graph/antigraph limb decomposition with its structural validation, the
//! descent reconstruction of the unique coupling, and the uniqueness
//! verdict tying chains, limbs and the optimal face together.

use crate::chains::{
    build_match_graph, compute_levels, detect_cyclic, max_chain_length, CyclicChain, Level,
    LevelAssignment, LinkMode, MaxChain, SupportSet,
};
use crate::costs::CostEnv;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::transport::{solve_kantorovich, DualPotentials, PlanEntry, Solution, TransportPlan};
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// The refinement of a level class E_k for k >= 2.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassRow {
    /// All pairs at level exactly k (ids into the support set).
    pub all: Vec<usize>,
    /// Horizontal-capable ends (a k-chain arrives via a shared target).
    pub h: Vec<usize>,
    /// Vertical-capable ends.
    pub v: Vec<usize>,
    /// Horizontal-only ends: E_k minus the vertical-capable set.
    pub h_minus: Vec<usize>,
    /// Vertical-only ends.
    pub v_minus: Vec<usize>,
    /// Ends reachable both ways at their level.
    pub hv: Vec<usize>,
}

/// The level classes E_k with their h/v refinements, plus the pairs of
/// unbounded level.
#[derive(Debug, Clone, Default)]
pub struct LevelClasses {
    /// E_1: pairs of level exactly 1.
    pub e1: Vec<usize>,
    /// E_k for k >= 2.
    pub rows: BTreeMap<usize, ClassRow>,
    /// Pairs with the infinity flag.
    pub e_inf: Vec<usize>,
}

impl LevelClasses {
    /// Pairs covered by the finite-level classes, ascending.
    pub fn finite_pairs(&self) -> Vec<usize> {
        let mut out = self.e1.clone();
        for row in self.rows.values() {
            out.extend(row.all.iter().copied());
        }
        out.sort_unstable();
        out
    }

    pub fn histogram(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        if !self.e1.is_empty() {
            h.insert("1".to_string(), self.e1.len());
        }
        for (k, row) in &self.rows {
            if !row.all.is_empty() {
                h.insert(k.to_string(), row.all.len());
            }
        }
        if !self.e_inf.is_empty() {
            h.insert("inf".to_string(), self.e_inf.len());
        }
        h
    }
}

/// Splits a level assignment into the classes E_k = S_k \ S_{k+1} with the
/// horizontal/vertical refinements; exact set algebra, no tolerances.
pub fn decompose_levels(s: &SupportSet, levels: &LevelAssignment) -> Result<LevelClasses> {
    if levels.level.len() != s.len() {
        return Err(Error::InvalidParameter(
            "level assignment does not match the support".into(),
        ));
    }
    let mut classes = LevelClasses::default();
    for (id, lv) in levels.level.iter().enumerate() {
        match lv {
            Level::Infinite => classes.e_inf.push(id),
            Level::Finite(1) => classes.e1.push(id),
            Level::Finite(k) => {
                let row = classes.rows.entry(*k).or_default();
                row.all.push(id);
                let h = levels.h_flag[id];
                let v = levels.v_flag[id];
                if !h && !v {
                    return Err(Error::Structure {
                        reason: format!("pair at level {k} carries no end flag"),
                        witness: vec![s.pairs[id]],
                    });
                }
                if h {
                    row.h.push(id);
                }
                if v {
                    row.v.push(id);
                }
                match (h, v) {
                    (true, false) => row.h_minus.push(id),
                    (false, true) => row.v_minus.push(id),
                    (true, true) => row.hv.push(id),
                    (false, false) => unreachable!(),
                }
            }
        }
    }
    Ok(classes)
}

/// Whether a limb is a graph (odd index) or an antigraph (even index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimbKind {
    Graph,
    Antigraph,
}

/// One limb G_k with its functional form.
#[derive(Debug, Clone)]
pub struct Limb {
    pub k: usize,
    pub kind: LimbKind,
    /// Ids into the support set, ascending.
    pub pair_ids: Vec<usize>,
    /// Odd k: source -> target. Even k: target -> source.
    pub map: BTreeMap<usize, usize>,
}

/// The numbered limb system over the finite-level part of a support.
#[derive(Debug, Clone)]
pub struct LimbSystem {
    /// Limbs G_1..G_N (possibly empty rows kept for indexing).
    pub limbs: Vec<Limb>,
    /// Index sets I_0..I_N: ground targets for even k, sources for odd k.
    pub index_sets: Vec<BTreeSet<usize>>,
    /// Largest k with a nonempty limb.
    pub n_limbs: usize,
}

impl LimbSystem {
    pub fn limb(&self, k: usize) -> Option<&Limb> {
        self.limbs.get(k.checked_sub(1)?)
    }

    pub fn nonempty_limbs(&self) -> usize {
        self.limbs.iter().filter(|l| !l.pair_ids.is_empty()).count()
    }
}

fn structure_error(s: &SupportSet, reason: &str, ids: &[usize]) -> Error {
    Error::Structure {
        reason: reason.to_string(),
        witness: ids.iter().map(|&id| s.pairs[id]).collect(),
    }
}

/// Assembles the limbs from the level classes and validates every
/// structural property of a numbered limb system. Failures carry witness
/// pairs; they indicate a mistuned link tolerance or a non-monotone input.
///
/// `ground_m` / `ground_n` are the ambient ground-set sizes; sources and
/// targets not covered by any index set are absorbed into I_1 and I_0.
pub fn build_limb_system(
    s: &SupportSet,
    classes: &LevelClasses,
    ground_m: usize,
    ground_n: usize,
) -> Result<LimbSystem> {
    // Class-partition sanity: E_k = h- + hv + v- for every k >= 2.
    for (k, row) in &classes.rows {
        let mut rebuilt: Vec<usize> = row
            .h_minus
            .iter()
            .chain(&row.hv)
            .chain(&row.v_minus)
            .copied()
            .collect();
        rebuilt.sort_unstable();
        let mut all = row.all.clone();
        all.sort_unstable();
        if rebuilt != all {
            return Err(structure_error(
                s,
                &format!("class E_{k} is not partitioned by its h/v refinement"),
                &all,
            ));
        }
    }

    let max_level = classes.rows.keys().copied().max().unwrap_or(1);
    let n_rows = max_level.max(1);
    let empty = ClassRow::default();
    let row = |k: usize| classes.rows.get(&k).unwrap_or(&empty);

    let mut limbs: Vec<Limb> = Vec::new();
    for k in 1..=n_rows {
        let (kind, ids): (LimbKind, Vec<usize>) = if k == 1 {
            // G_1 = E_1 plus the horizontal-only ends of E_2.
            let mut ids = classes.e1.clone();
            ids.extend(row(2).h_minus.iter().copied());
            (LimbKind::Graph, ids)
        } else if k % 2 == 0 {
            // G_{2i} = E_{2i}^{v-} + E_{2i}^{hv} + E_{2i+1}^{v-}.
            let mut ids = row(k).v_minus.clone();
            ids.extend(row(k).hv.iter().copied());
            ids.extend(row(k + 1).v_minus.iter().copied());
            (LimbKind::Antigraph, ids)
        } else {
            // G_{2i+1} = E_{2i+2}^{h-} + E_{2i+1}^{hv} + E_{2i+1}^{h-}.
            let mut ids = row(k + 1).h_minus.clone();
            ids.extend(row(k).hv.iter().copied());
            ids.extend(row(k).h_minus.iter().copied());
            (LimbKind::Graph, ids)
        };
        let mut ids = ids;
        ids.sort_unstable();
        limbs.push(Limb {
            k,
            kind,
            pair_ids: ids,
            map: BTreeMap::new(),
        });
    }

    // Coverage: the limbs partition the finite-level pairs.
    {
        let mut covered: Vec<usize> = limbs.iter().flat_map(|l| l.pair_ids.clone()).collect();
        covered.sort_unstable();
        let finite = classes.finite_pairs();
        if covered != finite {
            let mut dedup = covered.clone();
            dedup.dedup();
            let reason = if dedup.len() != covered.len() {
                "limbs overlap: some pair is assigned to two limbs"
            } else {
                "limbs do not cover the finite-level support"
            };
            return Err(structure_error(s, reason, &finite));
        }
    }

    // Graph/antigraph validation with witnesses pointing at the clash.
    for limb in &mut limbs {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for &id in &limb.pair_ids {
            let (src, tgt) = s.pairs[id];
            let (key, val) = match limb.kind {
                LimbKind::Graph => (src, tgt),
                LimbKind::Antigraph => (tgt, src),
            };
            if let Some(&other_id) = seen.get(&key) {
                let reason = match limb.kind {
                    LimbKind::Graph => format!(
                        "limb G_{} must be a graph, but two of its pairs share the source {key}; \
                         of two support pairs sharing a source, one must be a vertical-capable \
                         end one level up, which no odd limb may contain",
                        limb.k
                    ),
                    LimbKind::Antigraph => format!(
                        "limb G_{} must be an antigraph, but two of its pairs share the target {key}",
                        limb.k
                    ),
                };
                return Err(structure_error(s, &reason, &[other_id, id]));
            }
            seen.insert(key, val);
        }
        limb.map = seen;
    }

    let n_limbs = limbs
        .iter()
        .rev()
        .find(|l| !l.pair_ids.is_empty())
        .map(|l| l.k)
        .unwrap_or(0);
    limbs.truncate(n_limbs);

    // Index sets I_k = projections of G_k and G_{k+1} onto the k-side.
    let limb_pairs = |k: usize| -> Vec<(usize, usize)> {
        if k == 0 || k > limbs.len() {
            return Vec::new(); // includes the G_0 = empty convention
        }
        limbs[k - 1]
            .pair_ids
            .iter()
            .map(|&id| s.pairs[id])
            .collect()
    };
    let mut index_sets: Vec<BTreeSet<usize>> = Vec::new();
    for k in 0..=n_limbs {
        let mut set = BTreeSet::new();
        for source in [k, k + 1] {
            for (i, j) in limb_pairs(source) {
                set.insert(if k % 2 == 1 { i } else { j });
            }
        }
        index_sets.push(set);
    }

    // Absorb uncovered ground elements: sources into I_1, targets into I_0.
    if n_limbs >= 1 {
        let covered_sources: BTreeSet<usize> = index_sets
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 2 == 1)
            .flat_map(|(_, set)| set.iter().copied())
            .collect();
        for x in 0..ground_m {
            if !covered_sources.contains(&x) {
                index_sets[1].insert(x);
            }
        }
        let covered_targets: BTreeSet<usize> = index_sets
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 2 == 0)
            .flat_map(|(_, set)| set.iter().copied())
            .collect();
        for y in 0..ground_n {
            if !covered_targets.contains(&y) {
                index_sets[0].insert(y);
            }
        }
    }

    // Disjointness of the odd index sets (in M) and the even ones (in N).
    for parity in [0usize, 1] {
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, set) in index_sets.iter().enumerate() {
            if k % 2 != parity {
                continue;
            }
            for &g in set {
                if let Some(&prev) = owner.get(&g) {
                    let mut witness_ids = Vec::new();
                    for limb in &limbs {
                        for &id in &limb.pair_ids {
                            let (i, j) = s.pairs[id];
                            let coord = if parity == 1 { i } else { j };
                            if coord == g {
                                witness_ids.push(id);
                            }
                        }
                    }
                    return Err(structure_error(
                        s,
                        &format!(
                            "index sets I_{prev} and I_{k} both contain ground element {g}; \
                             domains and ranges of the limb maps must be disjoint"
                        ),
                        &witness_ids,
                    ));
                }
                owner.insert(g, k);
            }
        }
    }

    // Dom f_k and Ran f_{k+1} must sit inside I_k.
    for k in 1..=n_limbs {
        let limb = &limbs[k - 1];
        for &dom_key in limb.map.keys() {
            if !index_sets[k].contains(&dom_key) {
                return Err(structure_error(
                    s,
                    &format!("Dom f_{k} escapes I_{k} at ground element {dom_key}"),
                    &limb.pair_ids,
                ));
            }
        }
        if let Some(next) = limbs.get(k) {
            for &ran_val in next.map.values() {
                if !index_sets[k].contains(&ran_val) {
                    return Err(structure_error(
                        s,
                        &format!("Ran f_{} escapes I_{k} at ground element {ran_val}", k + 1),
                        &next.pair_ids,
                    ));
                }
            }
        }
    }

    Ok(LimbSystem {
        limbs,
        index_sets,
        n_limbs,
    })
}

/// The descent reconstruction output.
#[derive(Debug, Clone)]
pub struct DescentResult {
    /// Per-limb partial plans, k descending from the outermost limb.
    pub gamma: Vec<(usize, Vec<(usize, usize, BigRational)>)>,
    /// Per-limb intermediate measures on the limb domains.
    pub eta: Vec<(usize, Vec<(usize, BigRational)>)>,
    /// The assembled plan when feasible.
    pub total: Vec<(usize, usize, BigRational)>,
    pub feasible: bool,
    /// Offending (limb, ground element) when mass went negative, or a
    /// marginal mismatch description.
    pub failure: Option<String>,
}

/// Runs the descent recursion from the outermost limb downward: each limb
/// pushes the not-yet-assigned marginal mass on its domain through its map;
/// a negative intermediate measure certifies that no coupling lives on the
/// system.
pub fn descent_reconstruct(
    s: &SupportSet,
    sys: &LimbSystem,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<DescentResult> {
    let m = mu.len();
    let n = nu.len();
    for limb in &sys.limbs {
        for &id in &limb.pair_ids {
            let (i, j) = s.pairs[id];
            if i >= m || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "support pair ({i},{j}) outside the measure ground sets"
                )));
            }
        }
    }

    let mut gamma: Vec<(usize, Vec<(usize, usize, BigRational)>)> = Vec::new();
    let mut eta: Vec<(usize, Vec<(usize, BigRational)>)> = Vec::new();
    // X/Y marginals of the limb processed at the previous index (k+1); the
    // disjointness of the index sets makes these the only mass already
    // spoken for on the current domain.
    let mut upper_row: BTreeMap<usize, BigRational> = BTreeMap::new();
    let mut upper_col: BTreeMap<usize, BigRational> = BTreeMap::new();
    let mut failure: Option<String> = None;

    'limbs: for k in (1..=sys.n_limbs).rev() {
        let limb = &sys.limbs[k - 1];
        let mut entries: Vec<(usize, usize, BigRational)> = Vec::new();
        let mut etas: Vec<(usize, BigRational)> = Vec::new();
        let mut row_masses: BTreeMap<usize, BigRational> = BTreeMap::new();
        let mut col_masses: BTreeMap<usize, BigRational> = BTreeMap::new();
        for (&dom, &ran) in &limb.map {
            let (i, j, available) = match limb.kind {
                LimbKind::Graph => {
                    // eta_k = (mu - X-marginal of gamma_{k+1}) on Dom f_k.
                    let used = upper_row
                        .get(&dom)
                        .cloned()
                        .unwrap_or_else(BigRational::zero);
                    (dom, ran, &mu.weights[dom] - used)
                }
                LimbKind::Antigraph => {
                    let used = upper_col
                        .get(&dom)
                        .cloned()
                        .unwrap_or_else(BigRational::zero);
                    (ran, dom, &nu.weights[dom] - used)
                }
            };
            if available.is_negative() {
                failure = Some(format!(
                    "limb {k}: intermediate measure negative at ground element {dom}"
                ));
                eta.push((k, etas));
                gamma.push((k, entries));
                break 'limbs;
            }
            etas.push((dom, available.clone()));
            if !available.is_zero() {
                row_masses
                    .entry(i)
                    .and_modify(|v| *v += &available)
                    .or_insert_with(|| available.clone());
                col_masses
                    .entry(j)
                    .and_modify(|v| *v += &available)
                    .or_insert_with(|| available.clone());
                entries.push((i, j, available));
            }
        }
        upper_row = row_masses;
        upper_col = col_masses;
        eta.push((k, etas));
        gamma.push((k, entries));
    }

    let mut total: Vec<(usize, usize, BigRational)> = gamma
        .iter()
        .flat_map(|(_, es)| es.iter().cloned())
        .collect();
    total.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut feasible = failure.is_none();
    if feasible {
        let mut row = vec![BigRational::zero(); m];
        let mut col = vec![BigRational::zero(); n];
        for (i, j, mass) in &total {
            row[*i] += mass;
            col[*j] += mass;
        }
        if row != mu.weights {
            feasible = false;
            failure = Some("reconstructed plan misses the source marginal".into());
        } else if col != nu.weights {
            feasible = false;
            failure = Some("reconstructed plan misses the target marginal".into());
        }
    }

    Ok(DescentResult {
        gamma,
        eta,
        total,
        feasible,
        failure,
    })
}

/// Verdict of the uniqueness analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Limb certificate holds and the descent reproduces the LP optimum.
    UniqueAndVerified,
    /// Limb certificate holds (no LP plan was available to compare).
    UniqueByLimbs,
    /// The unbounded-level set can carry optimizer mass; the chain method
    /// certifies nothing.
    Inconclusive,
}

pub fn verdict_string(v: Verdict) -> &'static str {
    match v {
        Verdict::UniqueAndVerified => "unique-and-verified",
        Verdict::UniqueByLimbs => "unique-by-limbs",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Full analysis record of one instance.
pub struct VerdictAnalysis {
    pub verdict: Verdict,
    pub solution: Solution,
    pub support_core: Vec<(usize, usize)>,
    pub max_chain: MaxChain,
    pub level_histogram: BTreeMap<String, usize>,
    pub e_inf_pairs: Vec<(usize, usize)>,
    pub e_inf_max_mass: BigRational,
    pub face_diameter: BigRational,
    pub cycles: Vec<CyclicChain>,
    pub limb_system: Option<LimbSystem>,
    pub support: SupportSet,
    pub levels: LevelAssignment,
    pub reconstruction: Option<DescentResult>,
}

impl VerdictAnalysis {
    pub fn plan(&self) -> &TransportPlan {
        &self.solution.plan
    }

    pub fn duals(&self) -> &DualPotentials {
        &self.solution.duals
    }
}

/// End-to-end uniqueness verdict: solve, take the support core (the union
/// of all optimal supports), run the chain dynamics on it, bound the mass
/// the optimal face can place on the unbounded-level pairs, and when that
/// bound is zero reconstruct the unique plan by limb descent and compare it
/// with the LP optimum entry for entry.
pub fn uniqueness_verdict(
    env: &CostEnv,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mode: LinkMode,
    face_tol: f64,
) -> Result<VerdictAnalysis> {
    let cost = env.matrix()?;
    let solution = solve_kantorovich(&cost, mu, nu)?;
    let core = solution.support_core()?;
    let support = SupportSet::from_env(env, core.clone(), mode)?;
    let g = build_match_graph(&support);
    let levels = compute_levels(&support, &g);
    let classes = decompose_levels(&support, &levels)?;
    let max_chain = max_chain_length(&levels);
    let e_inf_pairs: Vec<(usize, usize)> =
        classes.e_inf.iter().map(|&id| support.pairs[id]).collect();
    let e_inf_max_mass = solution.max_mass_on(&e_inf_pairs)?;
    let face_diameter = solution.face_diameter(None, face_tol)?;
    let cycles = detect_cyclic(&support)?;

    if e_inf_max_mass.is_positive() {
        return Ok(VerdictAnalysis {
            verdict: Verdict::Inconclusive,
            level_histogram: classes.histogram(),
            solution,
            support_core: core,
            max_chain,
            e_inf_pairs,
            e_inf_max_mass,
            face_diameter,
            cycles,
            limb_system: None,
            support,
            levels,
            reconstruction: None,
        });
    }

    // The unbounded part carries no optimizer mass; limbs live on the rest.
    let sys = build_limb_system(&support, &classes, mu.len(), nu.len())?;
    let descent = descent_reconstruct(&support, &sys, mu, nu)?;
    if !descent.feasible {
        return Err(Error::Structure {
            reason: format!(
                "limb descent failed although no optimizer mass sits on E_inf: {}",
                descent.failure.clone().unwrap_or_default()
            ),
            witness: Vec::new(),
        });
    }
    let lp_entries: Vec<(usize, usize, BigRational)> = solution
        .plan
        .entries
        .iter()
        .map(|e| (e.i, e.j, e.mass.clone()))
        .collect();
    if descent.total != lp_entries {
        return Err(Error::Structure {
            reason: "descent reconstruction disagrees with the LP optimum".into(),
            witness: Vec::new(),
        });
    }
    if !face_diameter.is_zero() {
        return Err(Error::Structure {
            reason: "limb certificate contradicts a positive face diameter".into(),
            witness: Vec::new(),
        });
    }

    Ok(VerdictAnalysis {
        verdict: Verdict::UniqueAndVerified,
        level_histogram: classes.histogram(),
        solution,
        support_core: core,
        max_chain,
        e_inf_pairs,
        e_inf_max_mass,
        face_diameter,
        cycles,
        limb_system: Some(sys),
        support,
        levels,
        reconstruction: Some(descent),
    })
}

/// Limb-only verdict for a user-provided support (no LP available): builds
/// the system and descends. Cyclic chains make it inconclusive.
pub fn limb_verdict(
    s: &SupportSet,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<(Verdict, Option<LimbSystem>, Option<DescentResult>)> {
    let g = build_match_graph(s);
    let levels = compute_levels(s, &g);
    let classes = decompose_levels(s, &levels)?;
    if !classes.e_inf.is_empty() {
        return Ok((Verdict::Inconclusive, None, None));
    }
    let sys = build_limb_system(s, &classes, mu.len(), nu.len())?;
    let descent = descent_reconstruct(s, &sys, mu, nu)?;
    let verdict = if descent.feasible {
        Verdict::UniqueByLimbs
    } else {
        Verdict::Inconclusive
    };
    Ok((verdict, Some(sys), Some(descent)))
}

/// JSON limb report per the external interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimbReport {
    pub limbs: Vec<LimbReportRow>,
    #[serde(rename = "I")]
    pub index_sets: BTreeMap<String, Vec<usize>>,
    pub verdict: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimbReportRow {
    pub k: usize,
    pub kind: LimbKind,
    pub pairs: Vec<(usize, usize)>,
}

pub fn limb_report(s: &SupportSet, sys: &LimbSystem, verdict: Verdict) -> LimbReport {
    LimbReport {
        limbs: sys
            .limbs
            .iter()
            .map(|l| LimbReportRow {
                k: l.k,
                kind: l.kind,
                pairs: l.pair_ids.iter().map(|&id| s.pairs[id]).collect(),
            })
            .collect(),
        index_sets: sys
            .index_sets
            .iter()
            .enumerate()
            .map(|(k, set)| (k.to_string(), set.iter().copied().collect()))
            .collect(),
        verdict: verdict_string(verdict).to_string(),
    }
}

/// Assembles a transport plan from descent output (for reports); the value
/// field is left at zero since no cost is attached here.
pub fn descent_plan(total: &[(usize, usize, BigRational)]) -> TransportPlan {
    let entries = total
        .iter()
        .map(|(i, j, mass)| PlanEntry {
            i: *i,
            j: *j,
            mass: mass.clone(),
        })
        .collect();
    TransportPlan {
        entries,
        value: BigRational::zero(),
    }
}
