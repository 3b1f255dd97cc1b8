//! Routing and ordering: assigns each request one of its k shortest
//! paths (balancing the per-link request count) and a single global
//! left-to-right spectral order whose per-link restrictions feed the
//! nonoverlap constraints. Keeping every per-link order a restriction of
//! one global sequence guarantees the acyclicity the configuration
//! problem needs.

use crate::error::ModelError;
use crate::net::{Request, RoutingSolution, Topology};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Rule used to build the global spectral order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingRule {
    /// Highest demanded rate first.
    ByDemandDesc,
    /// Ascending request id.
    ById,
    /// Shortest route first.
    ByPathLength,
}

/// Routing and ordering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosConfig {
    /// Candidate shortest paths per request.
    pub k_paths: usize,
    pub ordering_rule: OrderingRule,
}

impl Default for RosConfig {
    fn default() -> Self {
        RosConfig { k_paths: 3, ordering_rule: OrderingRule::ByDemandDesc }
    }
}

/// Dijkstra from `src`; returns (distance, predecessor link) per node.
fn shortest_tree(
    topology: &Topology,
    src: &str,
    banned_links: &[bool],
    banned_nodes: &[bool],
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = topology.nodes.len();
    let node_idx: BTreeMap<&str, usize> =
        topology.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let s = node_idx[src];
    dist[s] = 0.0;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(std::cmp::Reverse((ordered(0.0), s)));
    while let Some(std::cmp::Reverse((d_bits, u))) = heap.pop() {
        let d = f64::from_bits(d_bits);
        if d > dist[u] || banned_nodes[u] {
            continue;
        }
        for (li, link) in topology.links.iter().enumerate() {
            if banned_links[li] || link.src != topology.nodes[u] {
                continue;
            }
            let v = node_idx[link.dst.as_str()];
            if banned_nodes[v] {
                continue;
            }
            let nd = d + link.length;
            if nd < dist[v] - 1e-9 || (nd < dist[v] + 1e-9 && pred[v].map_or(true, |p| li < p)) {
                if nd < dist[v] {
                    dist[v] = nd;
                }
                pred[v] = Some(li);
                heap.push(std::cmp::Reverse((ordered(nd), v)));
            }
        }
    }
    (dist, pred)
}

// f64 as orderable bits; distances are non-negative so the bit pattern
// orders like the value
fn ordered(x: f64) -> u64 {
    x.to_bits()
}

fn extract_path(topology: &Topology, pred: &[Option<usize>], src: &str, dst: &str) -> Option<Vec<usize>> {
    let node_idx: BTreeMap<&str, usize> =
        topology.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut path = Vec::new();
    let mut at = node_idx[dst];
    let s = node_idx[src];
    while at != s {
        let li = pred[at]?;
        path.push(li);
        at = node_idx[topology.links[li].src.as_str()];
    }
    path.reverse();
    Some(path)
}

fn path_length(topology: &Topology, path: &[usize]) -> f64 {
    path.iter().map(|&li| topology.links[li].length).sum()
}

/// Yen's algorithm: up to k shortest loopless paths from src to dst,
/// ordered by length (ties by link-index sequence).
fn k_shortest_paths(
    topology: &Topology,
    src: &str,
    dst: &str,
    k: usize,
) -> Vec<Vec<usize>> {
    let no_links = vec![false; topology.links.len()];
    let no_nodes = vec![false; topology.nodes.len()];
    let (_, pred) = shortest_tree(topology, src, &no_links, &no_nodes);
    let Some(first) = extract_path(topology, &pred, src, dst) else {
        return Vec::new();
    };
    let node_idx: BTreeMap<&str, usize> =
        topology.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut found = vec![first];
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    while found.len() < k {
        let last = found.last().unwrap().clone();
        for spur_pos in 0..last.len() {
            let root = &last[..spur_pos];
            let spur_node = if spur_pos == 0 {
                src
            } else {
                topology.links[last[spur_pos - 1]].dst.as_str()
            };
            let mut banned_links = vec![false; topology.links.len()];
            for p in &found {
                if p.len() > spur_pos && p[..spur_pos] == *root {
                    banned_links[p[spur_pos]] = true;
                }
            }
            let mut banned_nodes = vec![false; topology.nodes.len()];
            banned_nodes[node_idx[src]] = spur_pos != 0;
            for &li in root {
                // ban interior nodes of the root to keep paths loopless
                let interior = topology.links[li].dst.as_str();
                if interior != spur_node {
                    banned_nodes[node_idx[interior]] = true;
                }
            }
            let (_, pred) = shortest_tree(topology, spur_node, &banned_links, &banned_nodes);
            if let Some(spur) = extract_path(topology, &pred, spur_node, dst) {
                let mut full = root.to_vec();
                full.extend(spur);
                if !found.contains(&full) && !candidates.contains(&full) {
                    candidates.push(full);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| {
            path_length(topology, a)
                .total_cmp(&path_length(topology, b))
                .then_with(|| a.cmp(b))
        });
        found.push(candidates.remove(0));
    }
    found
}

/// Assigns each request one of its k shortest paths, processed in
/// descending rate order (ties by ascending id), greedily minimizing the
/// global maximum per-link request count; further ties prefer the
/// shorter, then earlier-ranked candidate.
pub fn route(
    topology: &Topology,
    requests: &[Request],
    cfg: &RosConfig,
) -> Result<Vec<Vec<usize>>, ModelError> {
    assert!(cfg.k_paths >= 1);
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| {
        requests[b]
            .rate_r
            .total_cmp(&requests[a].rate_r)
            .then_with(|| requests[a].id.cmp(&requests[b].id))
    });
    let mut link_load = vec![0usize; topology.links.len()];
    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); requests.len()];
    for q in order {
        let req = &requests[q];
        let cands = k_shortest_paths(topology, &req.src, &req.dst, cfg.k_paths);
        if cands.is_empty() {
            return Err(ModelError::Unreachable {
                request: req.id.clone(),
                src: req.src.clone(),
                dst: req.dst.clone(),
            });
        }
        let mut best: Option<(usize, f64, usize)> = None; // (max load, length, idx)
        for (idx, cand) in cands.iter().enumerate() {
            let added_max = cand.iter().map(|&li| link_load[li] + 1).max().unwrap();
            let global_max = link_load
                .iter()
                .enumerate()
                .map(|(li, &c)| if cand.contains(&li) { c + 1 } else { c })
                .max()
                .unwrap()
                .max(added_max);
            let len = path_length(topology, cand);
            let key = (global_max, len, idx);
            if best.map_or(true, |(m, l, i)| {
                key.0 < m || (key.0 == m && (len < l || (len == l && idx < i)))
            }) {
                best = Some(key);
            }
        }
        let chosen = &cands[best.unwrap().2];
        for &li in chosen {
            link_load[li] += 1;
        }
        routes[q] = chosen.clone();
    }
    Ok(routes)
}

/// Builds the global spectral order plus its per-link restrictions Υ.
pub fn order(
    topology: &Topology,
    routes: &[Vec<usize>],
    requests: &[Request],
    cfg: &RosConfig,
) -> (BTreeMap<String, Vec<usize>>, Vec<usize>) {
    let mut global: Vec<usize> = (0..requests.len()).collect();
    match cfg.ordering_rule {
        OrderingRule::ById => {
            global.sort_by(|&a, &b| requests[a].id.cmp(&requests[b].id));
        }
        OrderingRule::ByDemandDesc => {
            global.sort_by(|&a, &b| {
                requests[b]
                    .rate_r
                    .total_cmp(&requests[a].rate_r)
                    .then_with(|| requests[a].id.cmp(&requests[b].id))
            });
        }
        OrderingRule::ByPathLength => {
            global.sort_by(|&a, &b| {
                path_length(topology, &routes[a])
                    .total_cmp(&path_length(topology, &routes[b]))
                    .then_with(|| requests[a].id.cmp(&requests[b].id))
            });
        }
    }
    let mut link_orders: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &q in &global {
        for &li in &routes[q] {
            link_orders.entry(topology.links[li].id.clone()).or_default().push(q);
        }
    }
    (link_orders, global)
}

/// Runs routing and ordering and assembles the validated solution.
pub fn solve(
    topology: &Topology,
    requests: &[Request],
    cfg: &RosConfig,
) -> Result<RoutingSolution, ModelError> {
    let routes = route(topology, requests, cfg)?;
    let (_, global) = order(topology, &routes, requests, cfg);
    RoutingSolution::build(topology, requests, routes, global)
}

/// Serializable routing-and-ordering document, so the configuration
/// solver can be driven by externally supplied solutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RosSolution {
    pub routes: Vec<RouteEntry>,
    pub global_order: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteEntry {
    pub request: String,
    pub links: Vec<String>,
}

impl RosSolution {
    pub fn from_routing(sol: &RoutingSolution, topology: &Topology) -> Self {
        RosSolution {
            routes: sol
                .request_ids
                .iter()
                .zip(&sol.routes)
                .map(|(id, route)| RouteEntry {
                    request: id.clone(),
                    links: route.iter().map(|&li| topology.links[li].id.clone()).collect(),
                })
                .collect(),
            global_order: sol.global_order.iter().map(|&q| sol.request_ids[q].clone()).collect(),
        }
    }

    /// Validates the document against a topology and request set.
    pub fn into_routing(
        &self,
        topology: &Topology,
        requests: &[Request],
    ) -> Result<RoutingSolution, ModelError> {
        let mut routes = vec![Vec::new(); requests.len()];
        for entry in &self.routes {
            let q = requests
                .iter()
                .position(|r| r.id == entry.request)
                .ok_or_else(|| ModelError::BadRequest {
                    request: entry.request.clone(),
                    reason: "route references unknown request".into(),
                })?;
            let mut links = Vec::with_capacity(entry.links.len());
            for lid in &entry.links {
                links.push(topology.link_idx(lid).ok_or_else(|| {
                    ModelError::BadTopology(format!("unknown link `{lid}` in route"))
                })?);
            }
            routes[q] = links;
        }
        let mut global = Vec::with_capacity(self.global_order.len());
        for id in &self.global_order {
            let q = requests.iter().position(|r| &r.id == id).ok_or_else(|| {
                ModelError::BadRequest {
                    request: id.clone(),
                    reason: "global order references unknown request".into(),
                }
            })?;
            global.push(q);
        }
        RoutingSolution::build(topology, requests, routes, global)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::load_topology;

    fn req(id: &str, src: &str, dst: &str, gbps: f64) -> Request {
        Request { id: id.into(), src: src.into(), dst: dst.into(), rate_r: gbps * 1e9 }
    }

    #[test]
    fn single_request_takes_unique_path() {
        let topo = load_topology(
            r#"{"nodes": ["a","b"], "links": [{"id":"ab","src":"a","dst":"b","length_km":80}],
                "modes": 2, "bandwidth_ghz": 2000}"#,
            80e3,
        )
        .unwrap();
        let routes = route(&topo, &[req("q0", "a", "b", 100.0)], &RosConfig::default()).unwrap();
        assert_eq!(routes, vec![vec![0]]);
    }

    fn two_disjoint_paths() -> Topology {
        load_topology(
            r#"{"nodes": ["a","m","n","b"], "links": [
                {"id":"am","src":"a","dst":"m","length_km":80},
                {"id":"mb","src":"m","dst":"b","length_km":80},
                {"id":"an","src":"a","dst":"n","length_km":80},
                {"id":"nb","src":"n","dst":"b","length_km":80}
            ], "modes": 2, "bandwidth_ghz": 2000}"#,
            80e3,
        )
        .unwrap()
    }

    #[test]
    fn equal_requests_balance_over_disjoint_paths() {
        let topo = two_disjoint_paths();
        let reqs = vec![req("q0", "a", "b", 100.0), req("q1", "a", "b", 100.0)];
        let routes = route(&topo, &reqs, &RosConfig { k_paths: 2, ..Default::default() }).unwrap();
        // one request per path
        assert_ne!(routes[0], routes[1]);
        let mut all: Vec<usize> = routes.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k1_degenerates_to_pure_shortest_path() {
        let topo = two_disjoint_paths();
        let reqs = vec![req("q0", "a", "b", 100.0), req("q1", "a", "b", 100.0)];
        let routes = route(&topo, &reqs, &RosConfig { k_paths: 1, ..Default::default() }).unwrap();
        // both land on the same (lexicographically first) shortest path
        assert_eq!(routes[0], routes[1]);
    }

    #[test]
    fn unreachable_destination_is_an_error() {
        let topo = load_topology(
            r#"{"nodes": ["a","b","c"], "links": [{"id":"ab","src":"a","dst":"b","length_km":80}],
                "modes": 2, "bandwidth_ghz": 2000}"#,
            80e3,
        )
        .unwrap();
        assert!(matches!(
            route(&topo, &[req("q0", "a", "c", 10.0)], &RosConfig::default()),
            Err(ModelError::Unreachable { .. })
        ));
    }

    #[test]
    fn by_id_order_on_shared_link() {
        let topo = load_topology(
            r#"{"nodes": ["a","b"], "links": [{"id":"ab","src":"a","dst":"b","length_km":80}],
                "modes": 2, "bandwidth_ghz": 2000}"#,
            80e3,
        )
        .unwrap();
        let reqs = vec![req("q1", "a", "b", 1.0), req("q2", "a", "b", 2.0), req("q3", "a", "b", 3.0)];
        let routes = vec![vec![0], vec![0], vec![0]];
        let cfg = RosConfig { k_paths: 1, ordering_rule: OrderingRule::ById };
        let (links, global) = order(&topo, &routes, &reqs, &cfg);
        assert_eq!(global, vec![0, 1, 2]);
        assert_eq!(links["ab"], vec![0, 1, 2]);
    }

    #[test]
    fn by_demand_desc_order() {
        let topo = two_disjoint_paths();
        let reqs = vec![
            req("q1", "a", "b", 100.0),
            req("q2", "a", "b", 400.0),
            req("q3", "a", "b", 200.0),
        ];
        let routes = vec![vec![0, 1], vec![0, 1], vec![2, 3]];
        let cfg = RosConfig { k_paths: 1, ordering_rule: OrderingRule::ByDemandDesc };
        let (_, global) = order(&topo, &routes, &reqs, &cfg);
        assert_eq!(global, vec![1, 2, 0]);
    }

    #[test]
    fn link_order_is_restriction_of_global() {
        let topo = two_disjoint_paths();
        let reqs = vec![
            req("q1", "a", "b", 100.0),
            req("q2", "a", "b", 400.0),
            req("q3", "a", "b", 200.0),
        ];
        let sol = solve(&topo, &reqs, &RosConfig { k_paths: 2, ..Default::default() }).unwrap();
        let pos = sol.global_position();
        for (link, ord) in &sol.link_order {
            for w in ord.windows(2) {
                assert!(pos[w[0]] < pos[w[1]], "link {link} order breaks global sequence");
            }
            for &q in ord {
                assert!(sol.routes[q].iter().any(|&li| &topo.links[li].id == link));
            }
        }
    }

    #[test]
    fn routing_is_deterministic() {
        let topo = two_disjoint_paths();
        let reqs = vec![
            req("q1", "a", "b", 100.0),
            req("q2", "a", "b", 100.0),
            req("q3", "a", "b", 200.0),
        ];
        let cfg = RosConfig::default();
        let a = solve(&topo, &reqs, &cfg).unwrap();
        let b = solve(&topo, &reqs, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ros_document_round_trip() {
        let topo = two_disjoint_paths();
        let reqs = vec![req("q1", "a", "b", 100.0), req("q2", "a", "b", 200.0)];
        let sol = solve(&topo, &reqs, &RosConfig::default()).unwrap();
        let doc = RosSolution::from_routing(&sol, &topo);
        let text = serde_json::to_string(&doc).unwrap();
        let parsed: RosSolution = serde_json::from_str(&text).unwrap();
        let rebuilt = parsed.into_routing(&topo, &reqs).unwrap();
        assert_eq!(sol, rebuilt);
    }

    #[test]
    fn yen_produces_distinct_loopless_paths() {
        let topo = two_disjoint_paths();
        let paths = k_shortest_paths(&topo, "a", "b", 5);
        assert_eq!(paths.len(), 2);
        assert_ne!(paths[0], paths[1]);
    }
}
