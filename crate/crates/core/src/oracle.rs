//! Brute-force reference implementations used to cross-check the fast
//! paths. Nothing here shares code with the solver or the chain machinery.

use crate::costs::CostMatrix;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::ratio;
use crate::transport::{PlanEntry, TransportPlan};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// Number of spanning trees of the complete bipartite graph K_{m,n}.
pub fn spanning_tree_count(m: usize, n: usize) -> u128 {
    let mut count: u128 = 1;
    for _ in 0..n.saturating_sub(1) {
        count = count.saturating_mul(m as u128);
    }
    for _ in 0..m.saturating_sub(1) {
        count = count.saturating_mul(n as u128);
    }
    count
}

/// All vertices of the transport polytope, by exhaustive enumeration of
/// spanning trees of K_{m,n} with exact integer tree flows.
///
/// Distinct trees can induce the same degenerate vertex; results are
/// deduplicated by support. `tree_cap` guards against combinatorial blowup.
pub fn enumerate_vertices(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tree_cap: u128,
) -> Result<Vec<Vec<(usize, usize, BigRational)>>> {
    let m = mu.len();
    let n = nu.len();
    if spanning_tree_count(m, n) > tree_cap {
        return Err(Error::BudgetExceeded(tree_cap as u64));
    }
    let mut weights = mu.weights.clone();
    weights.extend(nu.weights.iter().cloned());
    let scaled = ratio::scale_to_integers(&weights, 64, "oracle weights")?;
    let (sup, dem) = scaled.values.split_at(m);

    let nodes = m + n;
    let edges: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();

    let mut chosen: Vec<usize> = Vec::with_capacity(nodes - 1);
    let mut vertices: std::collections::BTreeSet<Vec<(usize, usize, BigRational)>> =
        std::collections::BTreeSet::new();

    // Backtracking over edge subsets forming spanning trees: edges taken in
    // index order, a union-find guards acyclicity, and the remaining-edge
    // count prunes dead branches.
    struct Dsu {
        parent: Vec<usize>,
    }
    impl Dsu {
        fn find(&mut self, x: usize) -> usize {
            if self.parent[x] != x {
                let r = self.find(self.parent[x]);
                self.parent[x] = r;
            }
            self.parent[x]
        }
    }

    fn recurse(
        idx: usize,
        chosen: &mut Vec<usize>,
        edges: &[(usize, usize)],
        m: usize,
        nodes: usize,
        sup: &[i128],
        dem: &[i128],
        denom: &BigInt,
        out: &mut std::collections::BTreeSet<Vec<(usize, usize, BigRational)>>,
    ) {
        if chosen.len() == nodes - 1 {
            if let Some(vertex) = tree_flows(chosen, edges, m, nodes, sup, dem, denom) {
                out.insert(vertex);
            }
            return;
        }
        if idx == edges.len() || edges.len() - idx < nodes - 1 - chosen.len() {
            return;
        }
        // Include edges[idx] if it keeps the partial forest acyclic.
        let (i, j) = edges[idx];
        let mut dsu = Dsu {
            parent: (0..nodes).collect(),
        };
        for &e in chosen.iter() {
            let (a, b) = edges[e];
            let (ra, rb) = (dsu.find(a), dsu.find(m + b));
            dsu.parent[ra] = rb;
        }
        let (ra, rb) = (dsu.find(i), dsu.find(m + j));
        if ra != rb {
            chosen.push(idx);
            recurse(idx + 1, chosen, edges, m, nodes, sup, dem, denom, out);
            chosen.pop();
        }
        recurse(idx + 1, chosen, edges, m, nodes, sup, dem, denom, out);
    }

    fn tree_flows(
        chosen: &[usize],
        edges: &[(usize, usize)],
        m: usize,
        nodes: usize,
        sup: &[i128],
        dem: &[i128],
        denom: &BigInt,
    ) -> Option<Vec<(usize, usize, BigRational)>> {
        // Leaf elimination: each leaf fixes its incident edge's flow.
        // Balances: +supply at sources, -demand at targets; a leaf source
        // ships its whole remaining balance out, a leaf target pulls its
        // remaining demand in.
        let mut balance: Vec<i128> = sup
            .iter()
            .copied()
            .chain(dem.iter().map(|&d| -d))
            .collect();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes]; // (edge pos, other)
        for (pos, &e) in chosen.iter().enumerate() {
            let (i, j) = edges[e];
            adj[i].push((pos, m + j));
            adj[m + j].push((pos, i));
        }
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut removed = vec![false; chosen.len()];
        let mut flow = vec![0i128; chosen.len()];
        let mut queue: Vec<usize> = (0..nodes).filter(|&v| degree[v] == 1).collect();
        while let Some(v) = queue.pop() {
            if degree[v] != 1 {
                continue;
            }
            let Some(&(pos, other)) = adj[v].iter().find(|&&(pos, _)| !removed[pos]) else {
                continue;
            };
            removed[pos] = true;
            let f = if v < m { balance[v] } else { -balance[v] };
            flow[pos] = f;
            balance[v] = 0;
            if v < m {
                // Mass f arrives at the target side.
                balance[other] += f;
            } else {
                // The source side ships f.
                balance[other] -= f;
            }
            degree[other] -= 1;
            degree[v] = 0;
            if degree[other] == 1 {
                queue.push(other);
            }
        }
        if flow.iter().any(|&f| f < 0) {
            return None;
        }
        let mut vertex: Vec<(usize, usize, BigRational)> = chosen
            .iter()
            .enumerate()
            .filter(|(pos, _)| flow[*pos] > 0)
            .map(|(pos, &e)| {
                let (i, j) = edges[e];
                (i, j, ratio::unscale(flow[pos], denom))
            })
            .collect();
        vertex.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Some(vertex)
    }

    recurse(
        0,
        &mut chosen,
        &edges,
        m,
        nodes,
        sup,
        dem,
        &scaled.denom,
        &mut vertices,
    );
    Ok(vertices.into_iter().collect())
}

/// Exact optimal vertices: value and all minimizing vertices.
pub fn enumerate_optimal_vertices(
    cost: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tree_cap: u128,
) -> Result<(BigRational, Vec<TransportPlan>)> {
    let vertices = enumerate_vertices(mu, nu, tree_cap)?;
    let mut best: Option<BigRational> = None;
    let mut plans: Vec<TransportPlan> = Vec::new();
    for v in vertices {
        let mut val = BigRational::zero();
        for (i, j, mass) in &v {
            val += cost.get(*i, *j)? * mass;
        }
        let better = match &best {
            None => true,
            Some(b) => val < *b,
        };
        if better {
            best = Some(val.clone());
            plans.clear();
        }
        if best.as_ref() == Some(&val) {
            plans.push(TransportPlan {
                entries: v
                    .into_iter()
                    .map(|(i, j, mass)| PlanEntry { i, j, mass })
                    .collect(),
                value: val,
            });
        }
    }
    match best {
        Some(value) => Ok((value, plans)),
        None => Err(Error::Infeasible("no vertex found".into())),
    }
}

/// Exhaustive cyclical-monotonicity check over all ordered tuples of
/// distinct pairs up to `max_len`; exponential, for tiny supports only.
pub fn monotone_exhaustive(
    pairs: &[(usize, usize)],
    cost: &CostMatrix,
    max_len: usize,
) -> Result<bool> {
    let p = pairs.len();
    fn tuples(
        p: usize,
        len: usize,
        cur: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for x in 0..p {
            if !used[x] {
                used[x] = true;
                cur.push(x);
                tuples(p, len, cur, used, out);
                cur.pop();
                used[x] = false;
            }
        }
    }
    for len in 2..=max_len.min(p) {
        let mut out = Vec::new();
        tuples(p, len, &mut Vec::new(), &mut vec![false; p], &mut out);
        for tuple in out {
            let mut sum = BigRational::zero();
            for t in 0..len {
                let a = tuple[t];
                let b = tuple[(t + 1) % len];
                sum += cost.get(pairs[b].0, pairs[a].1)? - cost.get(pairs[a].0, pairs[a].1)?;
            }
            if sum.is_negative() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Central-difference derivative of a scalar field along a direction.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], dir: &[f64], h: f64) -> f64 {
    let xp: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let xm: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    (f(&xp) - f(&xm)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::parse_ratio;

    #[test]
    fn tree_count_formula() {
        assert_eq!(spanning_tree_count(2, 2), 4);
        assert_eq!(spanning_tree_count(3, 3), 81);
        assert_eq!(spanning_tree_count(4, 4), 4096);
    }

    #[test]
    fn birkhoff_square_has_two_vertices() {
        let mu = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        let v = enumerate_vertices(&mu, &nu, 10_000).unwrap();
        assert_eq!(v.len(), 2);
        let half = parse_ratio("1/2").unwrap();
        assert!(v.contains(&vec![(0, 0, half.clone()), (1, 1, half.clone())]));
        assert!(v.contains(&vec![(0, 1, half.clone()), (1, 0, half)]));
    }

    #[test]
    fn vertices_match_solver_on_random_instances() {
        use crate::transport::solve_kantorovich;
        for seed in 0..20u64 {
            let m = 2 + (seed % 3) as usize;
            let n = 2 + ((seed / 3) % 3) as usize;
            let mu = DiscreteMeasure::random_positive(m, seed * 2 + 1);
            let nu = DiscreteMeasure::random_positive(n, seed * 2 + 2);
            let mut rows = Vec::new();
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            for _ in 0..m {
                let mut row = Vec::new();
                for _ in 0..n {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    row.push((state % 97) as f64);
                }
                rows.push(row);
            }
            let cost = CostMatrix::from_f64(&rows).unwrap();
            let sol = solve_kantorovich(&cost, &mu, &nu).unwrap();
            let (best, plans) = enumerate_optimal_vertices(&cost, &mu, &nu, 100_000).unwrap();
            assert_eq!(best, sol.plan.value, "seed {seed}");
            assert!(!plans.is_empty());
        }
    }

    #[test]
    fn monotone_exhaustive_agrees_with_fast_checker() {
        use crate::transport::{check_cyclical_monotone, Monotonicity};
        let cost = CostMatrix::from_f64(&[
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.5],
        ])
        .unwrap();
        let supports: Vec<Vec<(usize, usize)>> = vec![
            vec![(0, 0), (1, 1), (2, 2)],
            vec![(0, 1), (1, 0), (2, 2)],
            vec![(0, 2), (1, 1), (2, 0)],
            vec![(0, 0), (0, 1), (1, 2), (2, 1)],
        ];
        for s in supports {
            let slow = monotone_exhaustive(&s, &cost, 4).unwrap();
            let fast = matches!(
                check_cyclical_monotone(&s, &cost, 4).unwrap(),
                Monotonicity::Monotone
            );
            assert_eq!(slow, fast, "support {s:?}");
        }
    }
}
