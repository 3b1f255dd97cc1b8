//! Topology, requests, routes, spectral ordering and span-sharing
//! structure, plus loading and validation of the input documents.

use crate::error::ModelError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

/// A directional fiber link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub src: String,
    pub dst: String,
    /// Length in meters.
    pub length: f64,
    /// Number of amplified spans, ceiling(length / L_spn).
    pub span_count: usize,
}

/// Network topology with few-mode fiber links.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
    /// Spatial modes per fiber.
    pub modes_m: u32,
    /// Gridless usable spectrum per link, Hz.
    pub bandwidth_b: f64,
}

/// A connection request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub src: String,
    pub dst: String,
    /// Demanded information rate, bit/s.
    pub rate_r: f64,
}

#[derive(Deserialize)]
struct TopologyFile {
    nodes: Vec<String>,
    links: Vec<LinkFile>,
    modes: u32,
    bandwidth_ghz: f64,
}

#[derive(Deserialize)]
struct LinkFile {
    id: String,
    src: String,
    dst: String,
    length_km: f64,
}

#[derive(Deserialize)]
struct TrafficFile {
    requests: Vec<RequestFile>,
}

#[derive(Deserialize)]
struct RequestFile {
    id: String,
    src: String,
    dst: String,
    rate_gbps: f64,
}

/// Loads and validates a topology document. Link lengths are given in km
/// and converted to meters; span counts are derived from `l_spn` (m).
pub fn load_topology(text: &str, l_spn: f64) -> Result<Topology, ModelError> {
    let file: TopologyFile = serde_json::from_str(text)?;
    let mut seen_nodes = HashSet::new();
    for n in &file.nodes {
        if !seen_nodes.insert(n.clone()) {
            return Err(ModelError::DuplicateId { kind: "node", id: n.clone() });
        }
    }
    if file.modes == 0 {
        return Err(ModelError::BadTopology("modes must be >= 1".into()));
    }
    if file.bandwidth_ghz <= 0.0 {
        return Err(ModelError::BadTopology(format!(
            "bandwidth_ghz must be positive, got {}",
            file.bandwidth_ghz
        )));
    }
    let mut links = Vec::with_capacity(file.links.len());
    let mut seen_links = HashSet::new();
    for l in &file.links {
        if !seen_links.insert(l.id.clone()) {
            return Err(ModelError::DuplicateId { kind: "link", id: l.id.clone() });
        }
        for (node, field) in [(&l.src, "src"), (&l.dst, "dst")] {
            if !seen_nodes.contains(node) {
                return Err(ModelError::UnknownNode {
                    link: l.id.clone(),
                    node: node.clone(),
                    field,
                });
            }
        }
        if l.length_km <= 0.0 || !l.length_km.is_finite() {
            return Err(ModelError::NonPositive {
                link: l.id.clone(),
                field: "length_km",
                value: l.length_km,
            });
        }
        let length = l.length_km * 1e3;
        links.push(Link {
            id: l.id.clone(),
            src: l.src.clone(),
            dst: l.dst.clone(),
            length,
            span_count: span_count(length, l_spn),
        });
    }
    Ok(Topology {
        nodes: file.nodes,
        links,
        modes_m: file.modes,
        bandwidth_b: file.bandwidth_ghz * 1e9,
    })
}

/// Spans per link: each link is discretized into ceiling(length/L_spn)
/// full spans, each carrying one amplifier.
pub fn span_count(length: f64, l_spn: f64) -> usize {
    ((length / l_spn).ceil() as usize).max(1)
}

/// Loads and validates a traffic document against a topology.
pub fn load_traffic(text: &str, topology: &Topology) -> Result<Vec<Request>, ModelError> {
    let file: TrafficFile = serde_json::from_str(text)?;
    let nodes: HashSet<&String> = topology.nodes.iter().collect();
    let mut seen = HashSet::new();
    let mut requests = Vec::with_capacity(file.requests.len());
    for r in &file.requests {
        if !seen.insert(r.id.clone()) {
            return Err(ModelError::DuplicateId { kind: "request", id: r.id.clone() });
        }
        if r.rate_gbps <= 0.0 || !r.rate_gbps.is_finite() {
            return Err(ModelError::BadRequest {
                request: r.id.clone(),
                reason: format!("rate_gbps must be positive, got {}", r.rate_gbps),
            });
        }
        if r.src == r.dst {
            return Err(ModelError::BadRequest {
                request: r.id.clone(),
                reason: "src and dst must differ".into(),
            });
        }
        for (node, field) in [(&r.src, "src"), (&r.dst, "dst")] {
            if !nodes.contains(node) {
                return Err(ModelError::BadRequest {
                    request: r.id.clone(),
                    reason: format!("unknown node `{node}` in field `{field}`"),
                });
            }
        }
        requests.push(Request {
            id: r.id.clone(),
            src: r.src.clone(),
            dst: r.dst.clone(),
            rate_r: r.rate_gbps * 1e9,
        });
    }
    Ok(requests)
}

impl Topology {
    pub fn link_idx(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Outgoing adjacency: node -> [(link index, dst node)].
    pub fn adjacency(&self) -> HashMap<&str, Vec<(usize, &str)>> {
        let mut adj: HashMap<&str, Vec<(usize, &str)>> = HashMap::new();
        for n in &self.nodes {
            adj.entry(n.as_str()).or_default();
        }
        for (i, l) in self.links.iter().enumerate() {
            adj.entry(l.src.as_str()).or_default().push((i, l.dst.as_str()));
        }
        adj
    }
}

/// Checks that `route` (link indices) forms a connected chain; returns the
/// endpoints (first src, last dst).
fn route_endpoints<'a>(
    topology: &'a Topology,
    route: &[usize],
    request: &str,
) -> Result<(&'a str, &'a str), ModelError> {
    let first = &topology.links[route[0]];
    let mut at = first.dst.as_str();
    for &li in &route[1..] {
        let l = &topology.links[li];
        if l.src != at {
            return Err(ModelError::DisconnectedRoute {
                request: request.to_string(),
                src: first.src.clone(),
                dst: topology.links[*route.last().unwrap()].dst.clone(),
                at: at.to_string(),
            });
        }
        at = l.dst.as_str();
    }
    Ok((first.src.as_str(), at))
}

/// Shared span counts 𝓝_{q,i}: spans of links appearing on both routes.
/// Routes are lists of link indices; each must be a connected chain.
pub fn compute_shared_spans(
    topology: &Topology,
    routes: &[Vec<usize>],
) -> Result<Vec<Vec<usize>>, ModelError> {
    for (q, route) in routes.iter().enumerate() {
        if !route.is_empty() {
            route_endpoints(topology, route, &format!("#{q}"))?;
        }
    }
    let sets: Vec<HashSet<usize>> = routes.iter().map(|r| r.iter().copied().collect()).collect();
    let n = routes.len();
    let mut shared = vec![vec![0usize; n]; n];
    for q in 0..n {
        for i in (q + 1)..n {
            let count: usize = sets[q]
                .intersection(&sets[i])
                .map(|&li| topology.links[li].span_count)
                .sum();
            shared[q][i] = count;
            shared[i][q] = count;
        }
    }
    Ok(shared)
}

/// Routes, spectral ordering and span-sharing structure for a request set.
///
/// The per-link orders are restrictions of one global left-to-right
/// sequence, which keeps the nonoverlap constraints jointly satisfiable
/// with a single carrier frequency per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSolution {
    /// Request ids, indexed like every per-request vector below.
    pub request_ids: Vec<String>,
    /// Per-request route as topology link indices.
    pub routes: Vec<Vec<usize>>,
    /// Per-request total span count 𝓝_q.
    pub span_n: Vec<usize>,
    /// Symmetric shared-span matrix 𝓝_{q,i}, zero diagonal.
    pub shared_spans: Vec<Vec<usize>>,
    /// Per-link spectral order Υ_l: link id -> request indices, left to right.
    pub link_order: BTreeMap<String, Vec<usize>>,
    /// Global left-to-right sequence of request indices.
    pub global_order: Vec<usize>,
}

impl RoutingSolution {
    /// Builds a routing solution from routes plus a global spectral order.
    /// Per-link orders are derived as restrictions of the global order.
    pub fn build(
        topology: &Topology,
        requests: &[Request],
        routes: Vec<Vec<usize>>,
        global_order: Vec<usize>,
    ) -> Result<Self, ModelError> {
        assert_eq!(routes.len(), requests.len());
        let mut sorted: Vec<usize> = global_order.clone();
        sorted.sort_unstable();
        if sorted != (0..requests.len()).collect::<Vec<_>>() {
            return Err(ModelError::BadTopology(
                "global order must be a permutation of the request set".into(),
            ));
        }
        for (q, route) in routes.iter().enumerate() {
            let req = &requests[q];
            if route.is_empty() {
                return Err(ModelError::DisconnectedRoute {
                    request: req.id.clone(),
                    src: req.src.clone(),
                    dst: req.dst.clone(),
                    at: req.src.clone(),
                });
            }
            let (src, dst) = route_endpoints(topology, route, &req.id)?;
            if src != req.src || dst != req.dst {
                return Err(ModelError::DisconnectedRoute {
                    request: req.id.clone(),
                    src: req.src.clone(),
                    dst: req.dst.clone(),
                    at: src.to_string(),
                });
            }
        }
        let shared_spans = compute_shared_spans(topology, &routes)?;
        let span_n: Vec<usize> = routes
            .iter()
            .map(|r| r.iter().map(|&li| topology.links[li].span_count).sum())
            .collect();
        let mut link_order: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for &q in &global_order {
            for &li in &routes[q] {
                link_order.entry(topology.links[li].id.clone()).or_default().push(q);
            }
        }
        Ok(RoutingSolution {
            request_ids: requests.iter().map(|r| r.id.clone()).collect(),
            routes,
            span_n,
            shared_spans,
            link_order,
            global_order,
        })
    }

    /// Builds a routing solution from externally supplied per-link orders.
    /// The induced left-of relation must be acyclic; a topological sort
    /// (smallest request index first among ready candidates) recovers a
    /// global sequence consistent with every link.
    pub fn from_link_orders(
        topology: &Topology,
        requests: &[Request],
        routes: Vec<Vec<usize>>,
        link_orders: &BTreeMap<String, Vec<usize>>,
    ) -> Result<Self, ModelError> {
        let n = requests.len();
        // orders must list exactly the requests traversing each link
        for (link_id, order) in link_orders {
            let li = topology
                .link_idx(link_id)
                .ok_or_else(|| ModelError::BadTopology(format!("unknown link `{link_id}`")))?;
            for &q in order {
                if q >= n || !routes[q].contains(&li) {
                    return Err(ModelError::OrderingMismatch {
                        link: link_id.clone(),
                        request: if q < n { requests[q].id.clone() } else { q.to_string() },
                    });
                }
            }
            let traversing = routes
                .iter()
                .enumerate()
                .filter(|(_, r)| r.contains(&li))
                .count();
            if order.len() != traversing {
                return Err(ModelError::BadTopology(format!(
                    "link `{link_id}` order lists {} requests but {} traverse it",
                    order.len(),
                    traversing
                )));
            }
        }
        // left-of relation, deduplicated
        let mut succ: Vec<HashSet<usize>> = vec![HashSet::new(); n];
        let mut indeg = vec![0usize; n];
        for order in link_orders.values() {
            for w in order.windows(2) {
                if succ[w[0]].insert(w[1]) {
                    indeg[w[1]] += 1;
                }
            }
        }
        let mut ready: VecDeque<usize> = (0..n).filter(|&q| indeg[q] == 0).collect();
        let mut ready_sorted: Vec<usize> = ready.drain(..).collect();
        ready_sorted.sort_unstable();
        let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
            ready_sorted.into_iter().map(std::cmp::Reverse).collect();
        let mut global = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(q)) = heap.pop() {
            global.push(q);
            for &next in &succ[q] {
                indeg[next] -= 1;
                if indeg[next] == 0 {
                    heap.push(std::cmp::Reverse(next));
                }
            }
        }
        if global.len() != n {
            let stuck = (0..n).find(|&q| indeg[q] > 0).unwrap();
            return Err(ModelError::CyclicOrdering(requests[stuck].id.clone()));
        }
        Self::build(topology, requests, routes, global)
    }

    pub fn request_count(&self) -> usize {
        self.request_ids.len()
    }

    /// Unordered request pairs that share at least one span, i.e. the
    /// pairs carrying a carrier-distance variable.
    pub fn sharing_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.request_count();
        let mut pairs = Vec::new();
        for q in 0..n {
            for i in (q + 1)..n {
                if self.shared_spans[q][i] > 0 {
                    pairs.push((q, i));
                }
            }
        }
        pairs
    }

    /// Position of each request in the global order.
    pub fn global_position(&self) -> Vec<usize> {
        let mut pos = vec![0usize; self.request_count()];
        for (idx, &q) in self.global_order.iter().enumerate() {
            pos[q] = idx;
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_node_topology(length_km: f64) -> String {
        format!(
            r#"{{"nodes": ["a", "b"], "links": [{{"id": "ab", "src": "a", "dst": "b", "length_km": {length_km}}}], "modes": 4, "bandwidth_ghz": 2000}}"#
        )
    }

    #[test]
    fn span_count_exact_multiple() {
        let topo = load_topology(&two_node_topology(160.0), 80e3).unwrap();
        assert_eq!(topo.links[0].span_count, 2);
    }

    #[test]
    fn span_count_rounds_up() {
        let topo = load_topology(&two_node_topology(100.0), 80e3).unwrap();
        assert_eq!(topo.links[0].span_count, 2);
    }

    #[test]
    fn zero_length_link_rejected() {
        let err = load_topology(&two_node_topology(0.0), 80e3).unwrap_err();
        assert!(matches!(
            err,
            ModelError::NonPositive { field: "length_km", .. }
        ));
    }

    #[test]
    fn unknown_node_rejected_with_field() {
        let text = r#"{"nodes": ["a"], "links": [{"id": "ab", "src": "a", "dst": "b", "length_km": 10}], "modes": 1, "bandwidth_ghz": 100}"#;
        let err = load_topology(text, 80e3).unwrap_err();
        match err {
            ModelError::UnknownNode { link, node, field } => {
                assert_eq!(link, "ab");
                assert_eq!(node, "b");
                assert_eq!(field, "dst");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn triangle() -> Topology {
        let text = r#"{"nodes": ["a", "b", "c"],
            "links": [
                {"id": "ab", "src": "a", "dst": "b", "length_km": 160},
                {"id": "bc", "src": "b", "dst": "c", "length_km": 240},
                {"id": "ac", "src": "a", "dst": "c", "length_km": 80}
            ], "modes": 4, "bandwidth_ghz": 2000}"#;
        load_topology(text, 80e3).unwrap()
    }

    #[test]
    fn shared_spans_disjoint_routes_are_zero() {
        let topo = triangle();
        let shared = compute_shared_spans(&topo, &[vec![0], vec![2]]).unwrap();
        assert_eq!(shared, vec![vec![0, 0], vec![0, 0]]);
    }

    #[test]
    fn shared_spans_identical_routes_count_all_spans() {
        let topo = triangle();
        // ab (2 spans) + bc (3 spans) = 5
        let shared = compute_shared_spans(&topo, &[vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(shared[0][1], 5);
        assert_eq!(shared[1][0], 5);
        assert_eq!(shared[0][0], 0);
    }

    #[test]
    fn shared_spans_partial_overlap() {
        let topo = triangle();
        // overlap on "ab" only: 160 km -> 2 spans
        let shared = compute_shared_spans(&topo, &[vec![0, 1], vec![0]]).unwrap();
        assert_eq!(shared[0][1], 2);
    }

    #[test]
    fn disconnected_route_rejected() {
        let topo = triangle();
        // "ab" then "ac" does not chain (b != a)
        assert!(matches!(
            compute_shared_spans(&topo, &[vec![0, 2]]),
            Err(ModelError::DisconnectedRoute { .. })
        ));
    }

    fn requests_ab_ac() -> Vec<Request> {
        vec![
            Request { id: "q0".into(), src: "a".into(), dst: "b".into(), rate_r: 100e9 },
            Request { id: "q1".into(), src: "a".into(), dst: "c".into(), rate_r: 200e9 },
        ]
    }

    #[test]
    fn build_derives_span_totals_and_link_orders() {
        let topo = triangle();
        let reqs = requests_ab_ac();
        let sol =
            RoutingSolution::build(&topo, &reqs, vec![vec![0], vec![0, 1]], vec![1, 0]).unwrap();
        assert_eq!(sol.span_n, vec![2, 5]);
        assert_eq!(sol.shared_spans[0][1], 2);
        assert_eq!(sol.link_order["ab"], vec![1, 0]);
        assert_eq!(sol.link_order["bc"], vec![1]);
        assert!(!sol.link_order.contains_key("ac"));
        assert_eq!(sol.sharing_pairs(), vec![(0, 1)]);
    }

    #[test]
    fn link_orders_must_cover_traversing_requests() {
        let topo = triangle();
        let reqs = requests_ab_ac();
        let mut orders = BTreeMap::new();
        orders.insert("ab".to_string(), vec![0]);
        let err = RoutingSolution::from_link_orders(
            &topo,
            &reqs,
            vec![vec![0], vec![0, 1]],
            &orders,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::BadTopology(_)));
    }

    #[test]
    fn cyclic_link_orders_rejected() {
        let text = r#"{"nodes": ["a", "b", "c"],
            "links": [
                {"id": "ab", "src": "a", "dst": "b", "length_km": 80},
                {"id": "bc", "src": "b", "dst": "c", "length_km": 80}
            ], "modes": 2, "bandwidth_ghz": 2000}"#;
        let topo = load_topology(text, 80e3).unwrap();
        let reqs = vec![
            Request { id: "q0".into(), src: "a".into(), dst: "c".into(), rate_r: 1e9 },
            Request { id: "q1".into(), src: "a".into(), dst: "c".into(), rate_r: 1e9 },
        ];
        // same pair ordered oppositely on the two links of the shared path
        let mut orders = BTreeMap::new();
        orders.insert("ab".to_string(), vec![0, 1]);
        orders.insert("bc".to_string(), vec![1, 0]);
        let routes = vec![vec![0, 1], vec![0, 1]];
        let err = RoutingSolution::from_link_orders(&topo, &reqs, routes, &orders).unwrap_err();
        assert!(matches!(err, ModelError::CyclicOrdering(_)));
    }

    #[test]
    fn consistent_link_orders_recover_global_sequence() {
        let topo = triangle();
        let reqs = requests_ab_ac();
        let mut orders = BTreeMap::new();
        orders.insert("ab".to_string(), vec![1, 0]);
        orders.insert("bc".to_string(), vec![1]);
        let sol = RoutingSolution::from_link_orders(
            &topo,
            &reqs,
            vec![vec![0], vec![0, 1]],
            &orders,
        )
        .unwrap();
        assert_eq!(sol.global_order, vec![1, 0]);
    }
}
