//! Exact Kantorovich solves on finite instances, with the dual and
//! optimal-face machinery the chain analysis runs on.

pub mod simplex;

use crate::costs::CostMatrix;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::ratio::{self, format_ratio, parse_ratio, rational_from_f64};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One support atom of a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: BigRational,
}

/// Sparse coupling with exact masses, entries sorted by (i, j).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub value: BigRational,
}

impl TransportPlan {
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn mass_at(&self, i: usize, j: usize) -> BigRational {
        self.entries
            .iter()
            .find(|e| e.i == i && e.j == j)
            .map(|e| e.mass.clone())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn row_sums(&self, m: usize) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); m];
        for e in &self.entries {
            out[e.i] += &e.mass;
        }
        out
    }

    pub fn col_sums(&self, n: usize) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); n];
        for e in &self.entries {
            out[e.j] += &e.mass;
        }
        out
    }

    /// Recomputes the transport cost against a matrix.
    pub fn value_against(&self, cost: &CostMatrix) -> Result<BigRational> {
        let mut acc = BigRational::zero();
        for e in &self.entries {
            acc += cost.get(e.i, e.j)? * &e.mass;
        }
        Ok(acc)
    }

    /// Builds a plan from raw entries, checking positivity and summing value
    /// against the cost matrix.
    pub fn from_entries(entries: Vec<(usize, usize, BigRational)>, cost: &CostMatrix) -> Result<Self> {
        let mut es: Vec<PlanEntry> = Vec::with_capacity(entries.len());
        for (i, j, mass) in entries {
            if mass.is_negative() || mass.is_zero() {
                return Err(Error::InvalidInstance(format!(
                    "plan entry ({i},{j}) must carry positive mass"
                )));
            }
            cost.get(i, j)?;
            es.push(PlanEntry { i, j, mass });
        }
        es.sort_by_key(|e| (e.i, e.j));
        for w in es.windows(2) {
            if w[0].i == w[1].i && w[0].j == w[1].j {
                return Err(Error::InvalidInstance(format!(
                    "duplicate plan entry ({}, {})",
                    w[0].i, w[0].j
                )));
            }
        }
        let plan = TransportPlan {
            value: BigRational::zero(),
            entries: es,
        };
        let value = plan.value_against(cost)?;
        Ok(TransportPlan { value, ..plan })
    }
}

impl Serialize for TransportPlan {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Cell {
            Idx(usize),
            Mass(String),
        }
        let rows: Vec<[Cell; 3]> = self
            .entries
            .iter()
            .map(|e| [Cell::Idx(e.i), Cell::Idx(e.j), Cell::Mass(format_ratio(&e.mass))])
            .collect();
        let mut st = s.serialize_struct("TransportPlan", 2)?;
        st.serialize_field("entries", &rows)?;
        st.serialize_field("value", &format_ratio(&self.value))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for TransportPlan {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Cell {
            Num(f64),
            Str(String),
        }
        #[derive(Deserialize)]
        struct Raw {
            entries: Vec<(usize, usize, Cell)>,
            value: Cell,
        }
        let to_ratio = |c: Cell| -> std::result::Result<BigRational, D::Error> {
            match c {
                Cell::Num(x) => rational_from_f64(x).map_err(D::Error::custom),
                Cell::Str(s) => parse_ratio(&s).map_err(D::Error::custom),
            }
        };
        let raw = Raw::deserialize(d)?;
        let mut entries = Vec::with_capacity(raw.entries.len());
        for (i, j, c) in raw.entries {
            entries.push(PlanEntry {
                i,
                j,
                mass: to_ratio(c)?,
            });
        }
        entries.sort_by_key(|e| (e.i, e.j));
        Ok(TransportPlan {
            entries,
            value: to_ratio(raw.value)?,
        })
    }
}

/// Dual pair: feasibility phi_j - psi_i <= c_ij, equality on optimal support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualPotentials {
    #[serde(with = "ratio::ratio_serde::vec")]
    pub psi: Vec<BigRational>,
    #[serde(with = "ratio::ratio_serde::vec")]
    pub phi: Vec<BigRational>,
}

/// Scaled integer internals kept for exact face computations.
struct ScaledInstance {
    m: usize,
    n: usize,
    /// Dense scaled costs, full index space, row-major.
    cost: Vec<i128>,
    cost_denom: BigInt,
    /// Kept (positive-mass) node lists and their integer masses.
    kept_rows: Vec<usize>,
    kept_cols: Vec<usize>,
    supply: Vec<i128>,
    demand: Vec<i128>,
    mass_denom: BigInt,
    /// Integer duals on the full index space, cost scale.
    psi: Vec<i128>,
    phi: Vec<i128>,
}

impl ScaledInstance {
    fn cost_at(&self, i: usize, j: usize) -> i128 {
        self.cost[i * self.n + j]
    }

    fn reduced_cost(&self, i: usize, j: usize) -> i128 {
        self.cost_at(i, j) - self.phi[j] + self.psi[i]
    }
}

/// Exact solver output plus the scaled internals for face analysis.
pub struct Solution {
    pub plan: TransportPlan,
    pub duals: DualPotentials,
    pub pivots: u64,
    scaled: ScaledInstance,
}

impl Solution {
    pub fn value(&self) -> &BigRational {
        &self.plan.value
    }

    /// Pairs with zero reduced cost (tol in cost units; 0 keeps it exact).
    pub fn tight_pairs(&self, tol: f64) -> Vec<(usize, usize)> {
        let thr = self.tol_threshold(tol);
        let mut out = Vec::new();
        for i in 0..self.scaled.m {
            for j in 0..self.scaled.n {
                if self.scaled.reduced_cost(i, j) <= thr {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn tol_threshold(&self, tol: f64) -> i128 {
        if tol <= 0.0 {
            return 0;
        }
        let t = rational_from_f64(tol).unwrap_or_else(|_| BigRational::zero());
        let scaled = (t * BigRational::from_integer(self.scaled.cost_denom.clone())).floor();
        num_traits::ToPrimitive::to_i128(scaled.numer()).unwrap_or(i128::MAX)
    }

    /// Exact LP over the optimal face restricted to `allowed` pairs,
    /// minimizing (or maximizing) the integer objective given per pair.
    /// Returns the optimizing plan and the objective value in mass units
    /// (i.e. divided by the mass denominator).
    fn face_lp(
        &self,
        allowed: &[(usize, usize)],
        objective: impl Fn(usize, usize) -> i128,
        maximize: bool,
    ) -> Result<(TransportPlan, BigRational)> {
        let sc = &self.scaled;
        let row_pos: Vec<Option<usize>> = {
            let mut v = vec![None; sc.m];
            for (k, &r) in sc.kept_rows.iter().enumerate() {
                v[r] = Some(k);
            }
            v
        };
        let col_pos: Vec<Option<usize>> = {
            let mut v = vec![None; sc.n];
            for (k, &c) in sc.kept_cols.iter().enumerate() {
                v[c] = Some(k);
            }
            v
        };
        let mut arcs = Vec::with_capacity(allowed.len());
        let mut arc_pairs = Vec::with_capacity(allowed.len());
        for &(i, j) in allowed {
            if let (Some(ki), Some(kj)) = (row_pos[i], col_pos[j]) {
                let c = objective(i, j);
                arcs.push((ki as u32, kj as u32, if maximize { -c } else { c }));
                arc_pairs.push((i, j));
            }
        }
        let res = simplex::solve_transportation(
            sc.kept_rows.len(),
            sc.kept_cols.len(),
            &sc.supply,
            &sc.demand,
            &arcs,
        )?;
        let mut entries = Vec::new();
        let mut obj_num = BigInt::zero();
        for (k, &f) in res.flows.iter().enumerate() {
            let (i, j) = arc_pairs[k];
            if f > 0 {
                entries.push((i, j, ratio::unscale(f, &sc.mass_denom)));
            }
            obj_num += BigInt::from(f) * BigInt::from(objective(i, j));
        }
        let obj = BigRational::new(obj_num, sc.mass_denom.clone());
        let mut es: Vec<PlanEntry> = entries
            .into_iter()
            .map(|(i, j, mass)| PlanEntry { i, j, mass })
            .collect();
        es.sort_by_key(|e| (e.i, e.j));
        let plan = TransportPlan {
            value: BigRational::zero(),
            entries: es,
        };
        Ok((plan, obj))
    }

    /// Union of supports over all optimal plans: iterated face LPs confirm
    /// every tight arc that can carry mass; the rest are basis artifacts.
    pub fn support_core(&self) -> Result<Vec<(usize, usize)>> {
        let tight = self.tight_pairs(0.0);
        let mut confirmed: std::collections::BTreeSet<(usize, usize)> =
            self.plan.support().into_iter().collect();
        loop {
            let undecided: Vec<(usize, usize)> = tight
                .iter()
                .copied()
                .filter(|p| !confirmed.contains(p))
                .collect();
            if undecided.is_empty() {
                break;
            }
            let undecided_set: std::collections::BTreeSet<(usize, usize)> =
                undecided.iter().copied().collect();
            let (plan, gained) = self.face_lp(
                &tight,
                |i, j| {
                    if undecided_set.contains(&(i, j)) {
                        1
                    } else {
                        0
                    }
                },
                true,
            )?;
            let mut added = false;
            for e in &plan.entries {
                if undecided_set.contains(&(e.i, e.j)) {
                    confirmed.insert((e.i, e.j));
                    added = true;
                }
            }
            if !added || gained.is_zero() {
                break;
            }
        }
        Ok(confirmed.into_iter().collect())
    }

    /// Maximal total mass the optimal face can place on `pairs`.
    pub fn max_mass_on(&self, pairs: &[(usize, usize)]) -> Result<BigRational> {
        if pairs.is_empty() {
            return Ok(BigRational::zero());
        }
        let tight = self.tight_pairs(0.0);
        let target: std::collections::BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
        let (_, v) = self.face_lp(
            &tight,
            |i, j| if target.contains(&(i, j)) { 1 } else { 0 },
            true,
        )?;
        Ok(v)
    }

    /// Probe-weighted diameter of the optimal face.
    ///
    /// Default probes are the coordinate indicators of the leading
    /// (m-1) x (n-1) minor in row-major order with weights 2^-l, truncated
    /// after 31 probes. Those coordinates form an affine chart of the
    /// transport polytope, so two plans agreeing on all of them agree.
    pub fn face_diameter(&self, probes: Option<&[CostMatrix]>, tol: f64) -> Result<BigRational> {
        let thr_pairs = self.tight_pairs(tol);
        let mut total = BigRational::zero();
        let two = BigRational::from_integer(BigInt::from(2));
        let mut weight = BigRational::from_integer(BigInt::from(1));
        match probes {
            None => {
                // The leading minor's coordinates; when either dimension is 1
                // the plan is fully determined by its marginals and the
                // diameter is zero with no probes at all.
                let minor_rows = self.scaled.m.saturating_sub(1);
                let minor_cols = self.scaled.n.saturating_sub(1);
                let mut l = 0usize;
                'outer: for i in 0..minor_rows {
                    for j in 0..minor_cols {
                        if l > 30 {
                            break 'outer;
                        }
                        let obj = |a: usize, b: usize| if (a, b) == (i, j) { 1i128 } else { 0 };
                        let (_, hi) = self.face_lp(&thr_pairs, obj, true)?;
                        let (_, lo) = self.face_lp(&thr_pairs, obj, false)?;
                        total += &weight * (hi - lo);
                        weight /= &two;
                        l += 1;
                    }
                }
            }
            Some(list) => {
                for probe in list.iter().take(31) {
                    if probe.nrows() != self.scaled.m || probe.ncols() != self.scaled.n {
                        return Err(Error::InvalidParameter(
                            "probe shape must match the cost matrix".into(),
                        ));
                    }
                    let scaled =
                        ratio::scale_to_integers(probe.entries(), 96, "probe functional")?;
                    let n = self.scaled.n;
                    let vals = scaled.values;
                    let obj = move |a: usize, b: usize| vals[a * n + b];
                    let (_, hi) = self.face_lp(&thr_pairs, &obj, true)?;
                    let (_, lo) = self.face_lp(&thr_pairs, &obj, false)?;
                    let denom = BigRational::from_integer(scaled.denom.clone());
                    total += &weight * (hi - lo) / denom;
                    weight /= &two;
                }
            }
        }
        Ok(total)
    }
}

/// Solves the Kantorovich problem exactly, returning an optimal vertex plan
/// and feasible duals certifying it.
pub fn solve_kantorovich(
    cost: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Solution> {
    let m = mu.len();
    let n = nu.len();
    if cost.nrows() != m || cost.ncols() != n {
        return Err(Error::InvalidInstance(format!(
            "cost is {}x{} but measures have {m} and {n} atoms",
            cost.nrows(),
            cost.ncols()
        )));
    }
    let total_mu = mu.total();
    let total_nu = nu.total();
    if total_mu != total_nu {
        return Err(Error::MarginalMismatch(format!(
            "mu sums to {}, nu sums to {}",
            format_ratio(&total_mu),
            format_ratio(&total_nu)
        )));
    }

    // One common denominator for both measures keeps supplies equal exactly.
    let mut all_weights = mu.weights.clone();
    all_weights.extend(nu.weights.iter().cloned());
    let masses = ratio::scale_to_integers(&all_weights, 64, "measure weights")?;
    let (sup_all, dem_all) = masses.values.split_at(m);

    let kept_rows: Vec<usize> = (0..m).filter(|&i| sup_all[i] > 0).collect();
    let kept_cols: Vec<usize> = (0..n).filter(|&j| dem_all[j] > 0).collect();
    if kept_rows.is_empty() || kept_cols.is_empty() {
        return Err(Error::InvalidInstance("no mass to transport".into()));
    }
    let supply: Vec<i128> = kept_rows.iter().map(|&i| sup_all[i]).collect();
    let demand: Vec<i128> = kept_cols.iter().map(|&j| dem_all[j]).collect();

    let scaled_cost = ratio::scale_to_integers(cost.entries(), 96, "cost matrix")?;

    let mut arcs = Vec::with_capacity(kept_rows.len() * kept_cols.len());
    for (ki, &i) in kept_rows.iter().enumerate() {
        for (kj, &j) in kept_cols.iter().enumerate() {
            arcs.push((ki as u32, kj as u32, scaled_cost.values[i * n + j]));
        }
    }

    let res = simplex::solve_transportation(
        kept_rows.len(),
        kept_cols.len(),
        &supply,
        &demand,
        &arcs,
    )?;

    // Assemble the plan; value computed in exact integers.
    let mut entries = Vec::new();
    let mut value_num = BigInt::zero();
    for (k, &f) in res.flows.iter().enumerate() {
        if f > 0 {
            let i = kept_rows[k / kept_cols.len()];
            let j = kept_cols[k % kept_cols.len()];
            entries.push(PlanEntry {
                i,
                j,
                mass: ratio::unscale(f, &masses.denom),
            });
            value_num += BigInt::from(f) * BigInt::from(scaled_cost.values[i * n + j]);
        }
    }
    entries.sort_by_key(|e| (e.i, e.j));
    let value = BigRational::new(
        value_num,
        masses.denom.clone() * scaled_cost.denom.clone(),
    );

    // Extend integer duals from kept nodes to the full index space by
    // c-transform, preserving feasibility.
    let mut psi_int = vec![i128::MAX; m];
    let mut phi_int = vec![i128::MIN; n];
    for (k, &i) in kept_rows.iter().enumerate() {
        psi_int[i] = res.psi[k];
    }
    for (k, &j) in kept_cols.iter().enumerate() {
        phi_int[j] = res.phi[k];
    }
    for j in 0..n {
        if phi_int[j] == i128::MIN {
            // phi_j = min over kept i of c_ij + psi_i
            phi_int[j] = kept_rows
                .iter()
                .map(|&i| scaled_cost.values[i * n + j] + psi_int[i])
                .min()
                .unwrap();
        }
    }
    for i in 0..m {
        if psi_int[i] == i128::MAX {
            // psi_i = max over j of phi_j - c_ij
            psi_int[i] = (0..n)
                .map(|j| phi_int[j] - scaled_cost.values[i * n + j])
                .max()
                .unwrap();
        }
    }

    let cost_denom_r = BigRational::from_integer(scaled_cost.denom.clone());
    let duals = DualPotentials {
        psi: psi_int
            .iter()
            .map(|&u| BigRational::from_integer(BigInt::from(u)) / &cost_denom_r)
            .collect(),
        phi: phi_int
            .iter()
            .map(|&v| BigRational::from_integer(BigInt::from(v)) / &cost_denom_r)
            .collect(),
    };

    Ok(Solution {
        plan: TransportPlan { entries, value },
        duals,
        pivots: res.pivots,
        scaled: ScaledInstance {
            m,
            n,
            cost: scaled_cost.values,
            cost_denom: scaled_cost.denom,
            kept_rows,
            kept_cols,
            supply,
            demand,
            mass_denom: masses.denom,
            psi: psi_int,
            phi: phi_int,
        },
    })
}

/// No two support pairs share a source.
pub fn is_graph(pairs: &[(usize, usize)]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    pairs.iter().all(|&(i, _)| seen.insert(i))
}

/// No two support pairs share a target.
pub fn is_antigraph(pairs: &[(usize, usize)]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    pairs.iter().all(|&(_, j)| seen.insert(j))
}

/// True when the support, read as a bipartite graph, contains no cycle.
pub fn support_is_forest(pairs: &[(usize, usize)], m: usize, n: usize) -> bool {
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut z = x;
        while p[z] != r {
            let nx = p[z];
            p[z] = r;
            z = nx;
        }
        r
    }
    for &(i, j) in pairs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

/// Direction of a c-transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// phi(y) = min_x psi(x) + c(x, y)
    PsiToPhi,
    /// psi(x) = max_y phi(y) - c(x, y)
    PhiToPsi,
}

/// Exact min/max c-transform over the finite support.
pub fn c_transform(values: &[f64], cost: &CostMatrix, dir: TransformDirection) -> Result<Vec<f64>> {
    let (m, n) = (cost.nrows(), cost.ncols());
    let dense = cost.to_f64();
    match dir {
        TransformDirection::PsiToPhi => {
            if values.len() != m {
                return Err(Error::InvalidParameter("psi length mismatch".into()));
            }
            Ok((0..n)
                .map(|j| {
                    (0..m)
                        .map(|i| values[i] + dense[i][j])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect())
        }
        TransformDirection::PhiToPsi => {
            if values.len() != n {
                return Err(Error::InvalidParameter("phi length mismatch".into()));
            }
            Ok((0..m)
                .map(|i| {
                    (0..n)
                        .map(|j| values[j] - dense[i][j])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect())
        }
    }
}

/// Outcome of the cyclical-monotonicity scan.
#[derive(Debug, Clone)]
pub enum Monotonicity {
    Monotone,
    Violation {
        /// Indices into the pair list, in cycle order.
        cycle: Vec<usize>,
        /// The (negative) exact cycle sum.
        deficit: BigRational,
    },
}

/// Exhaustively checks all reassignment cycles of length <= max_cycle_len
/// over distinct support pairs.
///
/// The scan runs a min-plus power iteration on the exchange graph
/// w(p -> q) = c(x_q, y_p) - c(x_p, y_p); negative closed walks decompose
/// into negative simple cycles of no greater length. Small supports run the
/// iteration in exact rationals; larger ones use doubles, with every
/// candidate re-verified exactly before being reported (resolution 1e-12;
/// global monotonicity of solver outputs is certified by duality anyway).
pub fn check_cyclical_monotone(
    pairs: &[(usize, usize)],
    cost: &CostMatrix,
    max_cycle_len: usize,
) -> Result<Monotonicity> {
    if max_cycle_len < 2 {
        return Err(Error::InvalidParameter(
            "max_cycle_len must be at least 2".into(),
        ));
    }
    let p = pairs.len();
    if p < 2 {
        return Ok(Monotonicity::Monotone);
    }
    for &(i, j) in pairs {
        cost.get(i, j)?;
    }
    if p <= 64 {
        monotone_scan_exact(pairs, cost, max_cycle_len)
    } else {
        monotone_scan_float(pairs, cost, max_cycle_len)
    }
}

fn reconstruct_walk(parent: &[Vec<u32>], p: usize, a: usize, k: usize) -> Vec<usize> {
    let mut nodes = vec![a];
    let mut node = a;
    for layer in (0..k).rev() {
        let prev = parent[layer][a * p + node] as usize;
        nodes.push(prev);
        node = prev;
    }
    nodes.reverse(); // a, ..., a with k edges
    nodes
}

fn monotone_scan_exact(
    pairs: &[(usize, usize)],
    cost: &CostMatrix,
    max_cycle_len: usize,
) -> Result<Monotonicity> {
    let p = pairs.len();
    let mut w = Vec::with_capacity(p * p);
    for a in 0..p {
        for b in 0..p {
            w.push(cost.get(pairs[b].0, pairs[a].1)? - cost.get(pairs[a].0, pairs[a].1)?);
        }
    }
    let inf: Option<BigRational> = None;
    let mut cur: Vec<Option<BigRational>> = (0..p * p)
        .map(|idx| {
            let (a, b) = (idx / p, idx % p);
            if a == b {
                inf.clone()
            } else {
                Some(w[idx].clone())
            }
        })
        .collect();
    let mut parent: Vec<Vec<u32>> = vec![(0..p * p).map(|idx| (idx / p) as u32).collect()];

    for k in 2..=max_cycle_len {
        let mut next: Vec<Option<BigRational>> = vec![None; p * p];
        let mut par = vec![0u32; p * p];
        for a in 0..p {
            for r in 0..p {
                let Some(d) = &cur[a * p + r] else { continue };
                for b in 0..p {
                    let cand = d + &w[r * p + b];
                    let better = match &next[a * p + b] {
                        None => true,
                        Some(old) => cand < *old,
                    };
                    if better {
                        next[a * p + b] = Some(cand);
                        par[a * p + b] = r as u32;
                    }
                }
            }
        }
        parent.push(par);
        for a in 0..p {
            if matches!(&next[a * p + a], Some(d) if d.is_negative()) {
                let walk = reconstruct_walk(&parent, p, a, k);
                if let Some((cycle, deficit)) =
                    extract_negative_simple_cycle(&walk, pairs, cost)?
                {
                    return Ok(Monotonicity::Violation { cycle, deficit });
                }
            }
        }
        cur = next;
    }
    Ok(Monotonicity::Monotone)
}

fn monotone_scan_float(
    pairs: &[(usize, usize)],
    cost: &CostMatrix,
    max_cycle_len: usize,
) -> Result<Monotonicity> {
    let p = pairs.len();
    let dense = cost.to_f64();
    let w = |a: usize, b: usize| -> f64 {
        dense[pairs[b].0][pairs[a].1] - dense[pairs[a].0][pairs[a].1]
    };
    let mut cur: Vec<f64> = (0..p * p)
        .map(|idx| {
            let (a, b) = (idx / p, idx % p);
            if a == b {
                f64::INFINITY
            } else {
                w(a, b)
            }
        })
        .collect();
    let mut parent: Vec<Vec<u32>> = vec![(0..p * p).map(|idx| (idx / p) as u32).collect()];
    let margin = 1e-12;

    for k in 2..=max_cycle_len {
        let mut next = vec![f64::INFINITY; p * p];
        let mut par = vec![0u32; p * p];
        for a in 0..p {
            for r in 0..p {
                let d = cur[a * p + r];
                if !d.is_finite() {
                    continue;
                }
                for b in 0..p {
                    let cand = d + w(r, b);
                    if cand < next[a * p + b] {
                        next[a * p + b] = cand;
                        par[a * p + b] = r as u32;
                    }
                }
            }
        }
        parent.push(par);
        // Every flagged start is tried; ties at exactly zero fail the exact
        // verification and must not mask true violations elsewhere.
        for a in 0..p {
            if next[a * p + a] < margin {
                let walk = reconstruct_walk(&parent, p, a, k);
                if let Some((cycle, deficit)) =
                    extract_negative_simple_cycle(&walk, pairs, cost)?
                {
                    return Ok(Monotonicity::Violation { cycle, deficit });
                }
            }
        }
        cur = next;
    }
    Ok(Monotonicity::Monotone)
}

fn cycle_sum_exact(
    cycle: &[usize],
    pairs: &[(usize, usize)],
    cost: &CostMatrix,
) -> Result<BigRational> {
    let mut acc = BigRational::zero();
    let k = cycle.len();
    for t in 0..k {
        let a = cycle[t];
        let b = cycle[(t + 1) % k];
        acc += cost.get(pairs[b].0, pairs[a].1)? - cost.get(pairs[a].0, pairs[a].1)?;
    }
    Ok(acc)
}

fn extract_negative_simple_cycle(
    walk: &[usize],
    pairs: &[(usize, usize)],
    cost: &CostMatrix,
) -> Result<Option<(Vec<usize>, BigRational)>> {
    // walk = [a, ..., a]; peel repeated nodes into simple sub-cycles.
    let mut stack: Vec<usize> = Vec::new();
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for &node in &walk[..walk.len() - 1] {
        if let Some(pos) = stack.iter().position(|&x| x == node) {
            cycles.push(stack[pos..].to_vec());
            stack.truncate(pos);
        }
        stack.push(node);
    }
    if !stack.is_empty() {
        cycles.push(stack);
    }
    for cyc in cycles {
        if cyc.len() < 2 {
            continue;
        }
        let s = cycle_sum_exact(&cyc, pairs, cost)?;
        if s.is_negative() {
            return Ok(Some((cyc, s)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::parse_ratio;

    fn mat(rows: &[Vec<f64>]) -> CostMatrix {
        CostMatrix::from_f64(rows).unwrap()
    }

    fn half() -> BigRational {
        parse_ratio("1/2").unwrap()
    }

    #[test]
    fn solve_single_cell() {
        let c = mat(&[vec![3.5]]);
        let mu = DiscreteMeasure::uniform(1);
        let nu = DiscreteMeasure::uniform(1);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        assert_eq!(s.plan.entries.len(), 1);
        assert_eq!(s.plan.value, parse_ratio("3.5").unwrap());
    }

    #[test]
    fn solve_two_by_two_identity() {
        let c = mat(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        assert!(s.plan.value.is_zero());
        assert_eq!(s.plan.support(), vec![(0, 0), (1, 1)]);
        assert_eq!(s.plan.entries[0].mass, half());
        // Strong duality, exact.
        let dual_value: BigRational = s
            .duals
            .phi
            .iter()
            .zip(&nu.weights)
            .map(|(p, w)| p * w)
            .sum::<BigRational>()
            - s.duals
                .psi
                .iter()
                .zip(&mu.weights)
                .map(|(p, w)| p * w)
                .sum::<BigRational>();
        assert_eq!(dual_value, s.plan.value);
    }

    #[test]
    fn solve_constant_cost_returns_vertex() {
        let c = mat(&[vec![2.0, 2.0], vec![2.0, 2.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        assert_eq!(s.plan.value, parse_ratio("2").unwrap());
        assert!(support_is_forest(&s.plan.support(), 2, 2));
    }

    #[test]
    fn solver_rejects_marginal_mismatch() {
        let c = mat(&[vec![0.0, 1.0]]);
        let mu = DiscreteMeasure::uniform(1);
        let nu = DiscreteMeasure::new(vec![parse_ratio("1/3").unwrap(), parse_ratio("1/3").unwrap()]);
        assert!(nu.is_err());
        let nu = DiscreteMeasure {
            weights: vec![parse_ratio("1/3").unwrap(), parse_ratio("1/3").unwrap()],
        };
        assert!(matches!(
            solve_kantorovich(&c, &mu, &nu),
            Err(Error::MarginalMismatch(_))
        ));
    }

    #[test]
    fn duals_certify_support() {
        let c = mat(&[
            vec![1.0, 4.0, 7.0],
            vec![2.0, 1.0, 8.0],
            vec![5.0, 3.0, 1.5],
        ]);
        let mu = DiscreteMeasure::random_positive(3, 5);
        let nu = DiscreteMeasure::random_positive(3, 9);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        // Feasibility everywhere, tightness on support.
        for i in 0..3 {
            for j in 0..3 {
                let slack = c.get(i, j).unwrap() - (&s.duals.phi[j] - &s.duals.psi[i]);
                assert!(!slack.is_negative(), "dual infeasible at ({i},{j})");
            }
        }
        for e in &s.plan.entries {
            let slack = c.get(e.i, e.j).unwrap() - (&s.duals.phi[e.j] - &s.duals.psi[e.i]);
            assert!(slack.is_zero(), "support pair not tight");
        }
        // Vertex property.
        assert!(support_is_forest(&s.plan.support(), 3, 3));
        assert!(s.plan.entries.len() <= 3 + 3 - 1);
        // Marginals exact.
        assert_eq!(s.plan.row_sums(3), mu.weights);
        assert_eq!(s.plan.col_sums(3), nu.weights);
    }

    #[test]
    fn tight_pairs_contain_support() {
        let c = mat(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        let tight = s.tight_pairs(0.0);
        for p in s.plan.support() {
            assert!(tight.contains(&p));
        }
        // The basis may keep a zero-flow connector tight; the support core
        // is the honest object and must shed it.
        assert_eq!(s.support_core().unwrap(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn support_core_constant_cost_is_everything() {
        let c = mat(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        let core = s.support_core().unwrap();
        assert_eq!(core, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn support_core_strips_degenerate_connectors() {
        // Unique optimum: diagonal; the basis needs a spanning connector at
        // zero flow, which must not survive into the core.
        let c = mat(&[vec![0.0, 2.0], vec![2.0, 0.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        let core = s.support_core().unwrap();
        assert_eq!(core, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn face_diameter_unique_and_birkhoff() {
        // Unique optimum: diameter zero.
        let c = mat(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        assert!(s.face_diameter(None, 0.0).unwrap().is_zero());

        // Constant cost: the whole Birkhoff square is optimal; the single
        // leading-minor probe sees gamma_00 range over [0, 1/2].
        let c = mat(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        assert_eq!(s.face_diameter(None, 0.0).unwrap(), half());

        // Explicit probe form of the same measurement.
        let probe = mat(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(s.face_diameter(Some(&[probe]), 0.0).unwrap(), half());
    }

    #[test]
    fn face_diameter_invariant_under_cost_shift() {
        let c = mat(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let shifted = c.add_constant(&parse_ratio("5/3").unwrap());
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let a = solve_kantorovich(&c, &mu, &nu)
            .unwrap()
            .face_diameter(None, 0.0)
            .unwrap();
        let b = solve_kantorovich(&shifted, &mu, &nu)
            .unwrap()
            .face_diameter(None, 0.0)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn c_transform_examples() {
        // Identity-like cost: zero psi transforms to zero phi.
        let c = mat(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let phi = c_transform(&[0.0, 0.0], &c, TransformDirection::PsiToPhi).unwrap();
        assert_eq!(phi, vec![0.0, 0.0]);
        // One-point spaces: phi = psi + c.
        let c1 = mat(&[vec![2.5]]);
        let phi = c_transform(&[1.0], &c1, TransformDirection::PsiToPhi).unwrap();
        assert_eq!(phi, vec![3.5]);
        // Round trip is a contraction that stabilizes after one pass.
        let c = mat(&[vec![0.3, 1.7], vec![0.9, 0.2]]);
        let psi0 = vec![5.0, -3.0];
        let phi1 = c_transform(&psi0, &c, TransformDirection::PsiToPhi).unwrap();
        let psi1 = c_transform(&phi1, &c, TransformDirection::PhiToPsi).unwrap();
        let phi2 = c_transform(&psi1, &c, TransformDirection::PsiToPhi).unwrap();
        let psi2 = c_transform(&phi2, &c, TransformDirection::PhiToPsi).unwrap();
        assert!(psi1.iter().zip(&psi0).all(|(a, b)| a <= b));
        assert_eq!(psi1, psi2);
        assert_eq!(phi1, phi2);
    }

    #[test]
    fn monotone_checker_examples() {
        let c = mat(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        // Diagonal support: the swap raises cost, monotone.
        let m = check_cyclical_monotone(&[(0, 0), (1, 1)], &c, 6).unwrap();
        assert!(matches!(m, Monotonicity::Monotone));
        // Anti-diagonal support: swapping back saves 2.
        let m = check_cyclical_monotone(&[(0, 1), (1, 0)], &c, 6).unwrap();
        match m {
            Monotonicity::Violation { deficit, cycle } => {
                assert_eq!(deficit, parse_ratio("-2").unwrap());
                assert_eq!(cycle.len(), 2);
            }
            _ => panic!("expected violation"),
        }
        // Singletons are trivially monotone.
        let m = check_cyclical_monotone(&[(0, 1)], &c, 6).unwrap();
        assert!(matches!(m, Monotonicity::Monotone));
        // Parameter validation.
        assert!(check_cyclical_monotone(&[(0, 0)], &c, 1).is_err());
    }

    #[test]
    fn graph_antigraph_predicates() {
        assert!(is_graph(&[(0, 0), (1, 1)]));
        assert!(is_antigraph(&[(0, 0), (1, 1)]));
        assert!(!is_graph(&[(0, 0), (0, 1)]));
        assert!(is_antigraph(&[(0, 0), (0, 1)]));
        assert!(is_graph(&[(0, 0), (1, 0)]));
        assert!(!is_antigraph(&[(0, 0), (1, 0)]));
    }

    #[test]
    fn plan_json_round_trip() {
        let c = mat(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        let text = serde_json::to_string(&s.plan).unwrap();
        let back: TransportPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(s.plan, back);
    }

    #[test]
    fn solver_support_passes_monotonicity() {
        let c = mat(&[
            vec![0.2, 1.0, 2.0, 0.4],
            vec![1.1, 0.3, 0.9, 2.2],
            vec![2.0, 0.8, 0.1, 0.5],
        ]);
        let mu = DiscreteMeasure::random_positive(3, 21);
        let nu = DiscreteMeasure::random_positive(4, 22);
        let s = solve_kantorovich(&c, &mu, &nu).unwrap();
        let m = check_cyclical_monotone(&s.plan.support(), &c, 6).unwrap();
        assert!(matches!(m, Monotonicity::Monotone));
    }
}
