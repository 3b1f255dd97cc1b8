//! Independent brute-force and numerical-checking machinery used to
//! validate the solver at desk scale: exhaustive grid enumeration of the
//! original mixed-integer problem, central-difference gradient checks and
//! midpoint-convexity sampling.

use crate::error::OracleError;
use crate::instance::ProblemInstance;
use crate::phy::{self, osnr_threshold, transponder_power, TransponderConfig};
use crate::program::ConvexProgram;
use nalgebra::DVector;

/// Finite evaluation grids for the brute-force oracle. The discrete
/// variables (c, r, b, m) take their grids from the instance; transmit
/// power runs over a log-spaced grid and the carrier frequency over a
/// guard-band-quarter-spaced grid.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Log-spaced transmit-power points per decade.
    pub p_points_per_decade: usize,
    /// Total transmit-power range, W.
    pub p_range_w: (f64, f64),
    /// Carrier grid spacing, Hz. Defaults to 𝓖/4.
    pub omega_step: f64,
    /// Refusal threshold on the total enumeration size.
    pub cap: f64,
}

impl GridSpec {
    pub fn defaults(guard_band: f64) -> Self {
        GridSpec {
            p_points_per_decade: 20,
            p_range_w: (1e-5, 1e-2),
            omega_step: guard_band / 4.0,
            cap: 1e8,
        }
    }

    fn p_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.p_range_w;
        let decades = (hi / lo).log10();
        let count = (decades * self.p_points_per_decade as f64).ceil() as usize + 1;
        (0..count)
            .map(|i| lo * 10f64.powf(decades * i as f64 / (count - 1).max(1) as f64))
            .collect()
    }

    fn omega_grid(&self, bandwidth: f64) -> Vec<f64> {
        let count = (bandwidth / self.omega_step).floor() as usize;
        (1..=count).map(|i| i as f64 * self.omega_step).collect()
    }
}

/// Ranked outcome of a brute-force enumeration.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Grid-optimal configuration set.
    pub best: Vec<TransponderConfig>,
    /// Total transponder power of the optimum, W.
    pub objective_w: f64,
    /// Up to ten best feasible configuration sets, ascending power.
    pub top: Vec<(f64, Vec<TransponderConfig>)>,
    /// Number of enumerated (p, ω) witnesses.
    pub witnesses_checked: u64,
}

/// Total enumeration size of an instance under a grid.
pub fn enumeration_size(inst: &ProblemInstance, grid: &GridSpec) -> f64 {
    let d = &inst.discrete;
    let tuples = (d.c_levels.len() * d.r_rates.len() * (d.b_max - d.b_min + 1) as usize
        * d.m_max as usize) as f64;
    let p_count = grid.p_grid().len() as f64;
    let omega_count = grid.omega_grid(inst.bandwidth_b).len() as f64;
    (tuples * p_count * omega_count).powi(inst.request_count() as i32)
}

/// Exhaustive reference optimizer for the original mixed-integer
/// problem: enumerates every per-request (c, r, b, m) tuple combination
/// in ascending total-power order and searches the (p, ω) grids for a
/// feasibility witness, using the exact power formula and the exact OSNR
/// expression. The carrier enumeration honors the global spectral order.
pub fn brute_force_tcs(
    inst: &ProblemInstance,
    grid: &GridSpec,
) -> Result<OracleResult, OracleError> {
    let estimate = enumeration_size(inst, grid);
    if estimate > grid.cap {
        return Err(OracleError::CapExceeded { estimate, cap: grid.cap });
    }
    let n = inst.request_count();
    let k = &inst.constants;
    let d = &inst.discrete;
    if d.c_levels.is_empty() {
        return Err(OracleError::EmptyGrid("c"));
    }
    let p_grid = grid.p_grid();
    let omega_grid = grid.omega_grid(inst.bandwidth_b);
    if p_grid.is_empty() {
        return Err(OracleError::EmptyGrid("p"));
    }
    if omega_grid.is_empty() {
        return Err(OracleError::EmptyGrid("omega"));
    }

    // per-request discrete tuples (c, r, b, m) with their power
    #[derive(Clone, Copy)]
    struct Tuple {
        c: f64,
        r: f64,
        b: u32,
        m: u32,
        power: f64,
    }
    let mut tuples: Vec<Tuple> = Vec::new();
    for &c in &d.c_levels {
        for &r in &d.r_rates {
            for b in d.b_min..=d.b_max {
                for m in 1..=d.m_max {
                    let cfg = TransponderConfig { c, b, r, p: 1e-3, m, omega: 1.0 };
                    let power = transponder_power(&cfg, k).expect("r > 0");
                    tuples.push(Tuple { c, r, b, m, power });
                }
            }
        }
    }

    // joint combinations ascending by total power
    let mut combos: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let total: f64 = idx.iter().map(|&i| tuples[i].power).sum();
        combos.push((total, idx.clone()));
        let mut carry = n;
        for pos in (0..n).rev() {
            idx[pos] += 1;
            if idx[pos] < tuples.len() {
                carry = pos;
                break;
            }
            idx[pos] = 0;
        }
        if carry == n {
            break;
        }
    }
    combos.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    // per-request rate feasibility is independent of (p, ω); prune early
    let rate_ok: Vec<Vec<bool>> = (0..n)
        .map(|q| {
            tuples
                .iter()
                .map(|t| {
                    let cfg = TransponderConfig {
                        c: t.c,
                        b: t.b,
                        r: t.r,
                        p: 1e-3,
                        m: t.m,
                        omega: 1.0,
                    };
                    phy::rate_capacity(&cfg, inst.routing.span_n[q], inst.coupling, k)
                        >= inst.requests[q].rate_r
                })
                .collect()
        })
        .collect();

    let pos = inst.routing.global_position();
    let pairs = inst.routing.sharing_pairs();
    let mut witnesses_checked = 0u64;
    let mut top: Vec<(f64, Vec<TransponderConfig>)> = Vec::new();

    'combo: for (total, combo) in &combos {
        if top.len() >= 10 {
            break;
        }
        for q in 0..n {
            if !rate_ok[q][combo[q]] {
                continue 'combo;
            }
        }
        let mut cfgs: Vec<TransponderConfig> = combo
            .iter()
            .map(|&i| TransponderConfig {
                c: tuples[i].c,
                b: tuples[i].b,
                r: tuples[i].r,
                p: p_grid[0],
                m: tuples[i].m,
                omega: 0.0,
            })
            .collect();
        let thresholds: Vec<f64> =
            cfgs.iter().map(|cfg| osnr_threshold(cfg.c, cfg.r, k)).collect();

        // enumerate ω assignments honoring the global order, then p
        let mut omega_idx = vec![0usize; n];
        'omega: loop {
            for q in 0..n {
                cfgs[q].omega = omega_grid[omega_idx[q]];
            }
            if spectral_ok(&cfgs, inst, &pos, &pairs) {
                let mut p_idx = vec![0usize; n];
                'power: loop {
                    for q in 0..n {
                        cfgs[q].p = p_grid[p_idx[q]];
                    }
                    witnesses_checked += 1;
                    if qos_ok(&cfgs, inst, &thresholds) {
                        top.push((*total, cfgs.clone()));
                        break 'omega;
                    }
                    let mut carry = n;
                    for posn in (0..n).rev() {
                        p_idx[posn] += 1;
                        if p_idx[posn] < p_grid.len() {
                            carry = posn;
                            break;
                        }
                        p_idx[posn] = 0;
                    }
                    if carry == n {
                        break 'power;
                    }
                }
            }
            let mut carry = n;
            for posn in (0..n).rev() {
                omega_idx[posn] += 1;
                if omega_idx[posn] < omega_grid.len() {
                    carry = posn;
                    break;
                }
                omega_idx[posn] = 0;
            }
            if carry == n {
                break 'omega;
            }
        }
    }

    match top.first().cloned() {
        Some((objective_w, best)) => Ok(OracleResult { best, objective_w, top, witnesses_checked }),
        None => Err(OracleError::InfeasibleGrid),
    }
}

fn spectral_ok(
    cfgs: &[TransponderConfig],
    inst: &ProblemInstance,
    pos: &[usize],
    pairs: &[(usize, usize)],
) -> bool {
    let k = &inst.constants;
    for (q, cfg) in cfgs.iter().enumerate() {
        let half = cfg.delta(k) / 2.0;
        if cfg.omega < half || cfg.omega > inst.bandwidth_b - half {
            return false;
        }
        let _ = q;
    }
    // global-order direction per sharing pair
    for &(a, b) in pairs {
        let (e, l) = if pos[a] < pos[b] { (a, b) } else { (b, a) };
        if cfgs[e].omega >= cfgs[l].omega {
            return false;
        }
    }
    // nonoverlap with guard along every link order
    for order in inst.routing.link_order.values() {
        for w in order.windows(2) {
            let (e, l) = (w[0], w[1]);
            let required = (cfgs[e].delta(k) + cfgs[l].delta(k)) / 2.0 + k.guard_band;
            if cfgs[l].omega - cfgs[e].omega < required {
                return false;
            }
        }
    }
    true
}

fn qos_ok(cfgs: &[TransponderConfig], inst: &ProblemInstance, thresholds: &[f64]) -> bool {
    for q in 0..cfgs.len() {
        match phy::osnr(q, cfgs, &inst.routing, &inst.constants) {
            Ok(psi) => {
                if psi < thresholds[q] {
                    return false;
                }
            }
            Err(_) => return false,
        }
    }
    true
}

/// Ranked top-10 feasible configurations as CSV, for debugging.
pub fn top10_csv(result: &OracleResult, request_ids: &[String]) -> String {
    let mut out = String::from("rank,total_power_W,request_id,c,b,r,p_mW,m,omega_GHz\n");
    for (rank, (power, cfgs)) in result.top.iter().enumerate() {
        for (q, cfg) in cfgs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                rank + 1,
                power,
                request_ids[q],
                cfg.c,
                cfg.b,
                cfg.r,
                cfg.p * 1e3,
                cfg.m,
                cfg.omega / 1e9,
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------
// numerical checkers
// ---------------------------------------------------------------------

/// Deterministic splitmix64 stream for sampling points.
pub(crate) struct Rng(u64);

impl Rng {
    pub(crate) fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub(crate) fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Max relative error between analytic gradients and central finite
/// differences over `points` in-bounds samples, across the objective and
/// every constraint: max |analytic − difference| / max(1, |analytic|).
pub fn finite_diff_check(prog: &ConvexProgram, points: usize) -> f64 {
    finite_diff_max_error(
        &prog.bounds,
        prog.function_count(),
        |f, x| prog.function_value(f, x),
        |f, x| prog.function_grad(f, x),
        points,
        0x5eed,
    )
}

/// Generic central-difference gradient check over a sampling box.
pub fn finite_diff_max_error<V, G>(
    bounds: &[(f64, f64)],
    n_funcs: usize,
    value: V,
    gradient: G,
    points: usize,
    seed: u64,
) -> f64
where
    V: Fn(usize, &DVector<f64>) -> f64,
    G: Fn(usize, &DVector<f64>) -> DVector<f64>,
{
    let n = bounds.len();
    if n == 0 {
        return 0.0;
    }
    let mut rng = Rng::new(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = DVector::from_fn(n, |i, _| {
            let (lo, hi) = bounds[i];
            let inset = 2.0 * h + 1e-4 * (hi - lo);
            lo + inset + rng.next_f64() * (hi - lo - 2.0 * inset)
        });
        for f in 0..n_funcs {
            let grad = gradient(f, &x);
            for i in 0..n {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (value(f, &xp) - value(f, &xm)) / (2.0 * h);
                let err = (grad[i] - fd).abs() / grad[i].abs().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    worst
}

/// Max midpoint-convexity violation g((x+y)/2) − (g(x)+g(y))/2 over
/// random in-bounds pairs, across the objective and every constraint.
pub fn convexity_sample(prog: &ConvexProgram, pairs: usize) -> f64 {
    convexity_max_violation(
        &prog.bounds,
        prog.function_count(),
        |f, x| prog.function_value(f, x),
        pairs,
        0xc0ffee,
    )
}

/// Generic midpoint-convexity sampler over a box.
pub fn convexity_max_violation<V>(
    bounds: &[(f64, f64)],
    n_funcs: usize,
    value: V,
    pairs: usize,
    seed: u64,
) -> f64
where
    V: Fn(usize, &DVector<f64>) -> f64,
{
    let n = bounds.len();
    if n == 0 {
        return 0.0;
    }
    let mut rng = Rng::new(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let sample = |rng: &mut Rng| {
            DVector::from_fn(n, |i, _| {
                let (lo, hi) = bounds[i];
                lo + rng.next_f64() * (hi - lo)
            })
        };
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let mid = (&x + &y) * 0.5;
        for f in 0..n_funcs {
            let violation = value(f, &mid) - 0.5 * (value(f, &x) + value(f, &y));
            worst = worst.max(violation);
        }
    }
    worst.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::DiscreteSets;
    use crate::net::{load_topology, Request, RoutingSolution};
    use crate::phy::CouplingModel;
    use crate::solver::{self, SolverOptions};
    use crate::PhysicalConstants;

    /// Instance small enough for exhaustive enumeration: narrow spectrum,
    /// reduced grids.
    pub(crate) fn oracle_instance(n_requests: usize, rate_gbps: f64) -> ProblemInstance {
        let topo = load_topology(
            r#"{"nodes": ["a","b"], "links": [{"id":"ab","src":"a","dst":"b","length_km":400}],
                "modes": 2, "bandwidth_ghz": 120}"#,
            80e3,
        )
        .unwrap();
        let requests: Vec<Request> = (0..n_requests)
            .map(|i| Request {
                id: format!("q{i}"),
                src: "a".into(),
                dst: "b".into(),
                rate_r: rate_gbps * 1e9,
            })
            .collect();
        let routes = vec![vec![0]; n_requests];
        let routing =
            RoutingSolution::build(&topo, &requests, routes, (0..n_requests).collect()).unwrap();
        ProblemInstance::new(
            PhysicalConstants::default(),
            routing,
            requests,
            CouplingModel::Strong,
            DiscreteSets {
                c_levels: vec![2.0, 4.0],
                r_rates: vec![0.8],
                b_min: 5,
                b_max: 7,
                m_max: 2,
                ..Default::default()
            },
            crate::instance::DEFAULT_PENALTY_K,
            topo.bandwidth_b,
            topo.modes_m,
        )
        .unwrap()
    }

    fn small_grid() -> GridSpec {
        GridSpec {
            p_points_per_decade: 5,
            p_range_w: (1e-5, 1e-2),
            omega_step: 5e9,
            cap: 1e8,
        }
    }

    #[test]
    fn cap_refusal_carries_estimate() {
        let inst = oracle_instance(2, 10.0);
        let mut grid = small_grid();
        grid.cap = 10.0;
        match brute_force_tcs(&inst, &grid) {
            Err(OracleError::CapExceeded { estimate, cap }) => {
                assert!(estimate > cap);
                assert_eq!(cap, 10.0);
            }
            other => panic!("expected cap refusal, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_demand_is_reported() {
        let inst = oracle_instance(1, 10_000.0);
        assert!(matches!(
            brute_force_tcs(&inst, &small_grid()),
            Err(OracleError::InfeasibleGrid)
        ));
    }

    #[test]
    fn lone_request_optimum_minimizes_b_and_m() {
        // rate low enough for the smallest configuration; no broadening
        // effects matter at this scale
        let inst = oracle_instance(1, 8.0);
        let result = brute_force_tcs(&inst, &small_grid()).unwrap();
        let best = &result.best[0];
        assert_eq!(best.b, 5);
        assert_eq!(best.m, 1);
        // power does not depend on c; the ranked list is power-sorted
        for w in result.top.windows(2) {
            assert!(w[0].0 <= w[1].0);
        }
    }

    #[test]
    fn oracle_optimum_monotone_under_grid_refinement() {
        let inst = oracle_instance(2, 12.0);
        let coarse = brute_force_tcs(&inst, &small_grid()).unwrap();
        let mut fine = small_grid();
        fine.p_points_per_decade = 10;
        let refined = brute_force_tcs(&inst, &fine).unwrap();
        assert!(refined.objective_w <= coarse.objective_w + 1e-12);
    }

    #[test]
    fn oracle_agrees_with_feasibility_check() {
        let inst = oracle_instance(2, 12.0);
        let result = brute_force_tcs(&inst, &small_grid()).unwrap();
        for (_, cfgs) in &result.top {
            let feas = solver::feasibility_check(cfgs, &inst, None);
            assert!(feas.pass, "oracle-feasible point rejected: {:?}", feas.violations);
        }
        // and a deliberately overlapping point is rejected by both routes
        let mut bad = result.best.clone();
        bad[1].omega = bad[0].omega;
        let pos = inst.routing.global_position();
        let pairs = inst.routing.sharing_pairs();
        assert!(!spectral_ok(&bad, &inst, &pos, &pairs));
        assert!(!solver::feasibility_check(&bad, &inst, None).pass);
    }

    #[test]
    fn solver_matches_oracle_within_tolerance() {
        let inst = oracle_instance(2, 12.0);
        let result = brute_force_tcs(&inst, &small_grid()).unwrap();
        let report = solver::solve(&inst, &SolverOptions::default()).unwrap();
        let gap = (report.objective_power_w - result.objective_w) / result.objective_w;
        assert!(gap <= 0.05, "solver {} vs oracle {}", report.objective_power_w, result.objective_w);
    }

    #[test]
    fn gradient_check_passes_on_real_program() {
        let inst = oracle_instance(2, 12.0);
        let prog = ConvexProgram::build(&inst).unwrap();
        let err = finite_diff_check(&prog, 20);
        assert!(err < 1e-5, "gradient error {err}");
    }

    #[test]
    fn gradient_check_detects_corruption() {
        let inst = oracle_instance(2, 12.0);
        let prog = ConvexProgram::build(&inst).unwrap();
        let err = finite_diff_max_error(
            &prog.bounds,
            prog.function_count(),
            |f, x| prog.function_value(f, x),
            |f, x| {
                let mut g = prog.function_grad(f, x);
                g[0] += 0.5; // corrupted coordinate
                g
            },
            20,
            0x5eed,
        );
        assert!(err > 1e-2, "corruption not detected: {err}");
    }

    #[test]
    fn convexity_check_passes_on_real_program() {
        let inst = oracle_instance(2, 12.0);
        let prog = ConvexProgram::build(&inst).unwrap();
        let violation = convexity_sample(&prog, 2000);
        assert!(violation <= 1e-9, "violation {violation}");
    }

    #[test]
    fn convexity_check_detects_raw_power_objective() {
        // raw m/r transponder power without the log transform is not
        // convex over (m, r)
        let k = PhysicalConstants::default();
        let bounds = [(1.0, 10.0), (0.6, 0.9), (4.0, 11.0)];
        let violation = convexity_max_violation(
            &bounds,
            1,
            |_, x| {
                let (m, r, b) = (x[0], x[1], x[2]);
                k.p_trb
                    + 2.0 * k.p_edc * m / r
                    + 2.0 * m * 2f64.powf(b) * b * k.p_fft
                    + 2.0 * m * m * 2f64.powf(b) * k.p_dsp
            },
            2000,
            0xc0ffee,
        );
        assert!(violation > 1e-3, "expected positive violation, got {violation}");
    }

    #[test]
    fn zero_variable_program_checks_are_trivial() {
        let bounds: [(f64, f64); 0] = [];
        assert_eq!(
            finite_diff_max_error(&bounds, 1, |_, _| 0.0, |_, _| DVector::zeros(0), 10, 1),
            0.0
        );
        assert_eq!(convexity_max_violation(&bounds, 1, |_, _| 0.0, 10, 1), 0.0);
    }
}
