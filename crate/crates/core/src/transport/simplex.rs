//! Integer network simplex for the transportation problem.
//!
//! Works on an explicit arc list between `m` sources and `n` targets with
//! integer supplies, demands and costs (callers scale rationals beforehand).
//! A big-M artificial root makes any arc subset startable; positive
//! artificial flow at optimality signals infeasibility of the restricted
//! instance. All pivot arithmetic stays in `i128`; the caller bounds cost
//! magnitudes so sums cannot overflow.
//!
//! The tree is kept strongly feasible (leaving arc = last blocking arc in
//! cycle order from the apex), which rules out cycling when all supplies and
//! demands are positive; callers strip zero-mass nodes first.

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct SimplexResult {
    /// Flow per real arc, aligned with the input arc list.
    pub flows: Vec<i128>,
    /// Source potentials in cost units, anchored so psi[0] = 0.
    pub psi: Vec<i128>,
    /// Target potentials; feasibility reads phi_j - psi_i <= c_ij.
    pub phi: Vec<i128>,
    /// Number of pivots performed.
    pub pivots: u64,
}

const MAX_PIVOTS: u64 = 50_000_000;

struct Tree {
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    /// True when the tree arc is oriented node -> parent.
    arc_up: Vec<bool>,
    depth: Vec<u32>,
    children: Vec<Vec<usize>>,
    pi: Vec<i128>,
}

/// Min-cost transportation flow on the arc subset `arcs` (src, dst, cost).
pub fn solve_transportation(
    m: usize,
    n: usize,
    supply: &[i128],
    demand: &[i128],
    arcs: &[(u32, u32, i128)],
) -> Result<SimplexResult> {
    if supply.len() != m || demand.len() != n {
        return Err(Error::InvalidParameter(
            "supply/demand length mismatch".into(),
        ));
    }
    let total_s: i128 = supply.iter().sum();
    let total_d: i128 = demand.iter().sum();
    if total_s != total_d {
        return Err(Error::MarginalMismatch(format!(
            "total supply {total_s} != total demand {total_d}"
        )));
    }
    if supply.iter().chain(demand.iter()).any(|&x| x <= 0) {
        return Err(Error::InvalidParameter(
            "zero-mass nodes must be stripped before the simplex".into(),
        ));
    }

    let nn = m + n + 1;
    let root = m + n;
    let a_real = arcs.len();

    let max_c = arcs.iter().map(|a| a.2.abs()).max().unwrap_or(0);
    // Big-M above any simple-path cost; headroom for pivot sums is checked.
    let big_m = max_c
        .checked_mul(nn as i128 + 1)
        .and_then(|v| v.checked_add(1))
        .ok_or_else(|| Error::ArithmeticRange("cost magnitude too large for big-M".into()))?;
    if big_m.checked_mul(4 * nn as i128).is_none() {
        return Err(Error::ArithmeticRange(
            "cost magnitude too large for i128 pivot arithmetic".into(),
        ));
    }

    // Arc ids: real arcs, then m source->root arcs, then n root->target arcs.
    let a_total = a_real + m + n;
    let tail = |a: usize| -> usize {
        if a < a_real {
            arcs[a].0 as usize
        } else if a < a_real + m {
            a - a_real
        } else {
            root
        }
    };
    let head = |a: usize| -> usize {
        if a < a_real {
            m + arcs[a].1 as usize
        } else if a < a_real + m {
            root
        } else {
            m + (a - a_real - m)
        }
    };
    let cost = |a: usize| -> i128 { if a < a_real { arcs[a].2 } else { big_m } };

    let mut flow = vec![0i128; a_total];
    let mut in_tree = vec![false; a_total];

    let mut tree = Tree {
        parent: (0..nn).collect(),
        parent_arc: vec![usize::MAX; nn],
        arc_up: vec![false; nn],
        depth: vec![0; nn],
        children: vec![Vec::new(); nn],
        pi: vec![0; nn],
    };

    for i in 0..m {
        let a = a_real + i;
        flow[a] = supply[i];
        in_tree[a] = true;
        tree.parent[i] = root;
        tree.parent_arc[i] = a;
        tree.arc_up[i] = true; // i -> root
        tree.depth[i] = 1;
        tree.children[root].push(i);
        tree.pi[i] = big_m; // rc = M + pi(root) - pi(i) = 0
    }
    for j in 0..n {
        let a = a_real + m + j;
        let node = m + j;
        flow[a] = demand[j];
        in_tree[a] = true;
        tree.parent[node] = root;
        tree.parent_arc[node] = a;
        tree.arc_up[node] = false; // root -> node
        tree.depth[node] = 1;
        tree.children[root].push(node);
        tree.pi[node] = -big_m;
    }

    let block = ((a_total as f64).sqrt() as usize).clamp(16, 4096);
    let mut cursor = 0usize;
    let mut pivots: u64 = 0;

    let mut path_t: Vec<usize> = Vec::new();
    let mut path_h: Vec<usize> = Vec::new();

    loop {
        // --- entering arc: best reduced cost within a rolling block ---
        let rc = |a: usize, tree: &Tree| -> i128 { cost(a) + tree.pi[head(a)] - tree.pi[tail(a)] };
        let mut entering: Option<(usize, i128)> = None;
        let mut scanned = 0;
        while scanned < a_total {
            let mut best: Option<(usize, i128)> = None;
            let lim = block.min(a_total - scanned);
            for _ in 0..lim {
                let a = cursor;
                cursor += 1;
                if cursor == a_total {
                    cursor = 0;
                }
                if in_tree[a] {
                    continue;
                }
                let r = rc(a, &tree);
                if r < 0 && best.map_or(true, |(_, br)| r < br) {
                    best = Some((a, r));
                }
            }
            scanned += lim;
            if best.is_some() {
                entering = best;
                break;
            }
        }
        let Some((e, _)) = entering else {
            break; // optimal
        };

        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::BudgetExceeded(pivots));
        }

        // --- pivot cycle: paths from both endpoints up to the apex ---
        let (et, eh) = (tail(e), head(e));
        path_t.clear();
        path_h.clear();
        let (mut x, mut y) = (et, eh);
        while tree.depth[x] > tree.depth[y] {
            path_t.push(x);
            x = tree.parent[x];
        }
        while tree.depth[y] > tree.depth[x] {
            path_h.push(y);
            y = tree.parent[y];
        }
        while x != y {
            path_t.push(x);
            path_h.push(y);
            x = tree.parent[x];
            y = tree.parent[y];
        }

        // Cycle orientation: apex -> tail(e) (descending path_t), entering
        // arc, head(e) -> apex (ascending path_h). On the tail side the
        // cycle runs parent -> child, so child->parent arcs run backwards;
        // on the head side child -> parent arcs run forwards.
        let mut theta = i128::MAX;
        let mut leaving: Option<usize> = None; // node whose parent arc leaves

        // Strongly-feasible tie-break: last blocking arc in cycle order.
        for &node in path_t.iter().rev() {
            if tree.arc_up[node] && flow[tree.parent_arc[node]] <= theta {
                theta = flow[tree.parent_arc[node]];
                leaving = Some(node);
            }
        }
        for &node in path_h.iter() {
            if !tree.arc_up[node] && flow[tree.parent_arc[node]] <= theta {
                theta = flow[tree.parent_arc[node]];
                leaving = Some(node);
            }
        }
        if theta == i128::MAX {
            return Err(Error::Infeasible(
                "unbounded pivot cycle; transportation instance malformed".into(),
            ));
        }

        // --- flow update around the cycle ---
        flow[e] += theta;
        for &node in path_t.iter() {
            let a = tree.parent_arc[node];
            if tree.arc_up[node] {
                flow[a] -= theta;
            } else {
                flow[a] += theta;
            }
        }
        for &node in path_h.iter() {
            let a = tree.parent_arc[node];
            if tree.arc_up[node] {
                flow[a] += theta;
            } else {
                flow[a] -= theta;
            }
        }

        let leave_node = leaving.expect("blocking arc exists");
        let leave_arc = tree.parent_arc[leave_node];

        in_tree[leave_arc] = false;
        in_tree[e] = true;

        // The detached part is the subtree rooted at leave_node; exactly one
        // endpoint of e lies inside it and becomes its new root.
        let in_sub = |mut z: usize, tree: &Tree| -> bool {
            loop {
                if z == leave_node {
                    return true;
                }
                if z == root {
                    return false;
                }
                z = tree.parent[z];
            }
        };
        let (w, anchor) = if in_sub(et, &tree) { (et, eh) } else { (eh, et) };

        // Detach leave_node from its parent.
        let lp = tree.parent[leave_node];
        tree.children[lp].retain(|&c| c != leave_node);

        // Reverse parent pointers along w -> ... -> leave_node.
        let mut chain = Vec::new();
        let mut z = w;
        while z != leave_node {
            chain.push(z);
            z = tree.parent[z];
        }
        chain.push(leave_node);
        for k in (0..chain.len() - 1).rev() {
            let child = chain[k];
            let par = chain[k + 1];
            let a = tree.parent_arc[child];
            let up = tree.arc_up[child];
            tree.children[par].retain(|&c| c != child);
            tree.parent[par] = child;
            tree.parent_arc[par] = a;
            tree.arc_up[par] = !up;
            tree.children[child].push(par);
        }
        tree.parent[w] = anchor;
        tree.parent_arc[w] = e;
        tree.arc_up[w] = tail(e) == w;
        tree.children[anchor].push(w);

        // Recompute depth and potentials below w.
        let mut stack = vec![w];
        while let Some(node) = stack.pop() {
            let par = tree.parent[node];
            let a = tree.parent_arc[node];
            tree.depth[node] = tree.depth[par] + 1;
            tree.pi[node] = if tree.arc_up[node] {
                // node -> par basic: c + pi(par) - pi(node) = 0
                cost(a) + tree.pi[par]
            } else {
                tree.pi[par] - cost(a)
            };
            for &c in &tree.children[node] {
                stack.push(c);
            }
        }
    }

    // Feasibility: artificial arcs must end at zero flow.
    for a in a_real..a_total {
        if flow[a] != 0 {
            return Err(Error::Infeasible(
                "no feasible flow on the given arc set".into(),
            ));
        }
    }

    let (psi, phi) = normalize_duals(m, n, arcs, &tree, &in_tree);

    Ok(SimplexResult {
        flows: flow[..a_real].to_vec(),
        psi,
        phi,
        pivots,
    })
}

/// Converts tree potentials into anchored dual potentials.
///
/// Dual feasibility reads `c_ij - phi_j + psi_i >= 0`, equality on basic
/// arcs. Potentials are only determined per connected component of the real
/// basic arcs (the artificial root arcs carry the big-M constant); each
/// unanchored component is shifted until some crossing arc becomes tight,
/// which is a valid dual update and mirrors what a connected basis would
/// give. Components with no crossing arcs keep their relative values.
/// The global gauge is fixed by psi[0] = 0.
fn normalize_duals(
    m: usize,
    n: usize,
    arcs: &[(u32, u32, i128)],
    tree: &Tree,
    in_tree: &[bool],
) -> (Vec<i128>, Vec<i128>) {
    let nodes = m + n;

    fn find(comp: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while comp[r] != r {
            r = comp[r];
        }
        let mut z = x;
        while comp[z] != r {
            let nxt = comp[z];
            comp[z] = r;
            z = nxt;
        }
        r
    }

    let mut comp: Vec<usize> = (0..nodes).collect();
    for (a, arc) in arcs.iter().enumerate() {
        if in_tree[a] {
            let ra = find(&mut comp, arc.0 as usize);
            let rb = find(&mut comp, m + arc.1 as usize);
            if ra != rb {
                comp[ra] = rb;
            }
        }
    }

    let mut psi: Vec<i128> = (0..m).map(|i| -tree.pi[i]).collect();
    let mut phi: Vec<i128> = (0..n).map(|j| -tree.pi[m + j]).collect();

    let mut fixed = vec![false; nodes];
    let anchor = find(&mut comp, 0);
    for x in 0..nodes {
        if find(&mut comp, x) == anchor {
            fixed[x] = true;
        }
    }

    while fixed.iter().any(|&f| !f) {
        // Smallest-id unfixed component, for determinism.
        let lead = (0..nodes).find(|&x| !fixed[x]).unwrap();
        let croot = find(&mut comp, lead);
        // Shift delta applied to all psi/phi of the component preserves
        // internal reduced costs; crossing arcs bound it:
        //   fixed source -> comp target: rc - delta >= 0  => delta <= rc
        //   comp source -> fixed target: rc + delta >= 0  => delta >= -rc
        let mut min_in: Option<i128> = None; // fixed -> comp
        let mut min_out: Option<i128> = None; // comp -> fixed
        for arc in arcs.iter() {
            let (i, jn) = (arc.0 as usize, m + arc.1 as usize);
            let r = arc.2 - phi[jn - m] + psi[i];
            let ci = find(&mut comp, i);
            let cj = find(&mut comp, jn);
            if fixed[i] && !fixed[jn] && cj == croot {
                min_in = Some(min_in.map_or(r, |v: i128| v.min(r)));
            }
            if !fixed[i] && ci == croot && fixed[jn] {
                min_out = Some(min_out.map_or(r, |v: i128| v.min(r)));
            }
        }
        let delta = match (min_in, min_out) {
            (Some(a), _) => a,
            (None, Some(b)) => -b,
            (None, None) => 0,
        };
        for x in 0..nodes {
            if !fixed[x] && find(&mut comp, x) == croot {
                if x < m {
                    psi[x] += delta;
                } else {
                    phi[x - m] += delta;
                }
                fixed[x] = true;
            }
        }
    }

    let kappa = psi[0];
    for p in psi.iter_mut() {
        *p -= kappa;
    }
    for p in phi.iter_mut() {
        *p -= kappa;
    }
    (psi, phi)
}
