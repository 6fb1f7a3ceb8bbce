//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roadtwin::geo::Coord;
use roadtwin::graph::{Edge, NodeId, RoadGraph};
use roadtwin::osm::HighwayClass;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A graph whose edge travel times are exactly the given weights.
///
/// Nodes are `0..n`, laid out on a small circle so geometry is valid.
pub fn graph_from_times(n: usize, edges: &[(usize, usize, f64)]) -> RoadGraph {
    let nodes: BTreeMap<NodeId, Coord> = (0..n)
        .map(|i| {
            let a = i as f64 / n.max(1) as f64 * std::f64::consts::TAU;
            (i as NodeId, Coord::new(40.0 + 0.001 * a.sin(), -3.0 + 0.001 * a.cos()))
        })
        .collect();
    let edges = edges
        .iter()
        .map(|&(s, d, t)| {
            // 3.6 kph is 1 m/s, so the travel time equals the length
            let geometry = vec![nodes[&(s as NodeId)], nodes[&(d as NodeId)]];
            Edge::new(
                s as NodeId,
                d as NodeId,
                t,
                3.6,
                HighwayClass::Residential,
                None,
                None,
                geometry,
            )
        })
        .collect();
    RoadGraph::new(nodes, edges)
}

/// Random simple digraph on `n` nodes; no self loops, no parallel edges.
pub fn random_digraph(
    r: &mut ChaCha8Rng,
    n: usize,
    p: f64,
    weight: impl Fn(&mut ChaCha8Rng) -> f64,
) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && r.gen_bool(p) {
                let w = weight(r);
                edges.push((s, d, w));
            }
        }
    }
    edges
}

pub fn small_int_weight(r: &mut ChaCha8Rng) -> f64 {
    f64::from(r.gen_range(1u32..=4))
}

pub fn float_weight(r: &mut ChaCha8Rng) -> f64 {
    r.gen_range(1.0..500.0)
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Betweenness by listing every simple path between every ordered pair.
pub fn enumeration_betweenness(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(s, d, w) in edges {
        adj[s].push((d, w));
    }
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
            let mut stack = vec![s];
            let mut on_path = vec![false; n];
            on_path[s] = true;
            walk(&adj, t, &mut stack, &mut on_path, 0.0, &mut paths);
            let Some(best) = paths.iter().map(|p| p.0).reduce(f64::min) else {
                continue;
            };
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| same_cost(p.0, best)).map(|p| &p.1).collect();
            let total = shortest.len() as f64;
            for (v, score) in bc.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                let through = shortest.iter().filter(|p| p.contains(&v)).count() as f64;
                *score += through / total;
            }
        }
    }
    bc
}

fn walk(
    adj: &[Vec<(usize, f64)>],
    t: usize,
    stack: &mut Vec<usize>,
    on_path: &mut [bool],
    cost: f64,
    out: &mut Vec<(f64, Vec<usize>)>,
) {
    let v = *stack.last().unwrap();
    if v == t {
        out.push((cost, stack.clone()));
        return;
    }
    for &(w, c) in &adj[v] {
        if !on_path[w] {
            on_path[w] = true;
            stack.push(w);
            walk(adj, t, stack, on_path, cost + c, out);
            stack.pop();
            on_path[w] = false;
        }
    }
}

/// All-pairs shortest travel times; parallel edges keep the cheapest.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(s, t, w) in edges {
        if s != t {
            d[s][t] = d[s][t].min(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Betweenness from Floyd-Warshall distances and shortest-path counts.
///
/// A different route to the same quantity: σ(s,t) is counted by dynamic
/// programming over tight edges, and v lies on a shortest s-t path iff
/// d(s,v) + d(v,t) = d(s,t).
pub fn path_count_betweenness(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let d = floyd_warshall(n, edges);
    let mut w = vec![vec![f64::INFINITY; n]; n];
    for &(s, t, c) in edges {
        if s != t {
            w[s][t] = w[s][t].min(c);
        }
    }
    let mut sigma = vec![vec![0.0f64; n]; n];
    for s in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&v| d[s][v].is_finite()).collect();
        order.sort_by(|&a, &b| d[s][a].total_cmp(&d[s][b]));
        sigma[s][s] = 1.0;
        for &v in order.iter().skip(1) {
            sigma[s][v] = (0..n)
                .filter(|&u| u != v && w[u][v].is_finite() && d[s][u].is_finite())
                .filter(|&u| same_cost(d[s][u] + w[u][v], d[s][v]))
                .map(|u| sigma[s][u])
                .sum();
        }
    }
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || !d[s][t].is_finite() {
                continue;
            }
            for v in 0..n {
                if v != s && v != t && same_cost(d[s][v] + d[v][t], d[s][t]) {
                    bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
                }
            }
        }
    }
    bc
}

/// A road graph as dense indices plus `(src, dst, travel_time)` triples.
pub fn indexed(graph: &RoadGraph) -> (Vec<NodeId>, Vec<(usize, usize, f64)>) {
    let ids: Vec<NodeId> = graph.nodes().keys().copied().collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edges = graph
        .edges()
        .iter()
        .map(|e| (index[&e.src], index[&e.dst], e.travel_time_s))
        .collect();
    (ids, edges)
}

/// Nodes within `hops` steps of `center`, ignoring edge direction.
pub fn bfs_ball(edges: &[(NodeId, NodeId)], center: NodeId, hops: usize) -> BTreeSet<NodeId> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut dist = BTreeMap::from([(center, 0usize)]);
    let mut queue = VecDeque::from([center]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[&v];
        if dv == hops {
            continue;
        }
        for &w in adj.get(&v).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(w) {
                slot.insert(dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist.into_keys().collect()
}

/// Γ(a) for a positive integer or half-integer `a`, by the recurrence
/// from Γ(1) = 1 and Γ(1/2) = √π.
fn gamma_half_integer(a: f64) -> f64 {
    let twice = (2.0 * a).round();
    assert!(
        (twice - 2.0 * a).abs() < 1e-12 && twice >= 1.0,
        "a must be a positive half-integer"
    );
    let (mut g, mut x) = if (twice as u64).is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while x < a - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Upper tail of χ² with `df` degrees of freedom via the power series of
/// the lower regularized incomplete gamma function.
pub fn chi2_sf_series(statistic: f64, df: u32) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    let a = f64::from(df) / 2.0;
    let x = statistic / 2.0;
    // P(a, x) = x^a e^-x / Γ(a+1) * Σ x^n / ((a+1)...(a+n))
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    while term > 1e-17 * sum {
        term *= x / (a + n);
        sum += term;
        n += 1.0;
    }
    let lower = (a * x.ln() - x).exp() / gamma_half_integer(a + 1.0) * sum;
    1.0 - lower
}
