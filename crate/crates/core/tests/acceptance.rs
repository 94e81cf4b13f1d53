//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::time::Instant;

use popnet_core::bounds::{compute_bounds, lower_bound_with, LowerBoundMethod, LowerBoundOptions};
use popnet_core::dynamics::{
    solve_allocation, AllocationProblem, AllocationSource, StepDiagnostics,
};
use popnet_core::hills::{
    is_qch, mac_partition, mac_super_graph, qc_path_exists, validate_partition, UndirectedView,
};
use popnet_core::model::{is_nash_with, nash_gap_with};
use popnet_core::scenarios::{generate, scenario, Family};
use popnet_core::waterfill::{f_of_rho, solve_p1};
use popnet_core::{
    reduce_graph, simulate, ChoiceGraph, DynamicsKind, Instance, IntegratorConfig, PayoffSpec,
    PopulationState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const NASH_TOL: f64 = 1e-4;

/// Long horizon and coarse step so that the algebraic SSD tail settles.
fn suite_config() -> IntegratorConfig {
    IntegratorConfig {
        step: 0.1,
        t_max: 1e5,
        eq_tol: 1e-9,
        record_every: 1000,
        ..IntegratorConfig::default()
    }
}

/// Tighter stop for hills, where small per-edge gaps add up along a path.
fn qch_config() -> IntegratorConfig {
    IntegratorConfig {
        t_max: 3e5,
        eq_tol: 1e-10,
        ..suite_config()
    }
}

/// Nodes a converged run may still be draining: a node whose best neighbor
/// beats it by more than `NASH_TOL` loses mass at rate at least
/// `NASH_TOL * x_i`, so at stop it holds less than `eq_tol / NASH_TOL`.
fn residual_support(cfg: &IntegratorConfig) -> f64 {
    cfg.eq_tol / NASH_TOL
}

struct Run {
    instance: usize,
    kind: DynamicsKind,
    converged: bool,
    utility: f64,
    steady: PopulationState,
    diagnostics: StepDiagnostics,
}

fn run_all(instances: &[Instance], cfg: &IntegratorConfig) -> Vec<Run> {
    let jobs: Vec<(usize, DynamicsKind)> = (0..instances.len())
        .flat_map(|i| DynamicsKind::ALL.into_iter().map(move |k| (i, k)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, kind)| {
            let inst = &instances[i];
            let tr = simulate(kind, &inst.x0, &inst.flow(), &inst.payoffs, cfg.clone())
                .unwrap_or_else(|e| panic!("instance {i} {kind}: {e}"));
            Run {
                instance: i,
                kind,
                converged: tr.converged,
                utility: tr.final_utility,
                steady: tr.steady_state(),
                diagnostics: tr.diagnostics,
            }
        })
        .collect()
}

fn sandwich_instances() -> Vec<Instance> {
    (0..50)
        .map(|s| generate(1000 + s, 4 + (s as usize % 7), Family::Random))
        .collect()
}

fn qch_instances() -> Vec<Instance> {
    let chains = (0..10).map(|s| generate(2000 + s, 4 + (s as usize % 7), Family::Chain));
    let hills = (0..10).map(|s| generate(3000 + s, 4 + (s as usize % 7), Family::Qch));
    chains.chain(hills).collect()
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String, started: Instant) {
        if !ok {
            self.failures += 1;
        }
        println!(
            "[{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

fn all_nodes(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Independent value of `sum p_i(x_i) - p_i(0)` for quadratic payoffs.
fn quad_value(a: &[f64], c: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| a[i] * xi - 0.5 * c[i] * xi * xi)
        .sum()
}

/// `v_m >= min(v_k, v_l)` for all `k <= m <= l`.
fn quasi_concave(v: &[f64]) -> bool {
    (0..v.len()).all(|k| (k..v.len()).all(|l| (k..=l).all(|m| v[m] >= v[k].min(v[l]))))
}

fn brute_qc_path(g: &ChoiceGraph, mpdp: &[f64], path: &mut Vec<usize>, target: usize) -> bool {
    let v = *path.last().unwrap();
    if v == target {
        let vals: Vec<f64> = path.iter().map(|&k| mpdp[k]).collect();
        return quasi_concave(&vals);
    }
    for &w in g.neighbors(v) {
        if !path.contains(&w) {
            path.push(w);
            if brute_qc_path(g, mpdp, path, target) {
                return true;
            }
            path.pop();
        }
    }
    false
}

fn sandwich(report: &mut Report, instances: &[Instance], runs: &[Run]) {
    let t = Instant::now();
    let bounds: Vec<_> = instances
        .par_iter()
        .map(|inst| compute_bounds(&inst.graph, &inst.x0, &inst.payoffs).unwrap())
        .collect();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for r in runs {
        let b = &bounds[r.instance];
        let excess = (b.u_min - r.utility).max(r.utility - b.u_max);
        worst = worst.max(excess);
        if excess > 1e-4 {
            bad.push(format!("#{} {}", r.instance, r.kind));
        }
    }
    report.line(
        "sandwich",
        bad.is_empty(),
        format!(
            "{} runs on {} instances, worst excess {worst:.2e} (tol 1e-4){}",
            runs.len(),
            instances.len(),
            if bad.is_empty() { String::new() } else { format!(", outside: {}", bad.join(" ")) }
        ),
        t,
    );
}

fn qch_uniqueness(report: &mut Report, instances: &[Instance], runs: &[Run]) {
    let t = Instant::now();
    let mut all_qch = true;
    let mut worst_opt: f64 = 0.0;
    let mut worst_pair: f64 = 0.0;
    let mut worst_bounds: f64 = 0.0;
    for (i, inst) in instances.iter().enumerate() {
        let n = inst.node_count();
        all_qch &= is_qch(&UndirectedView::from_graph(&inst.graph), &inst.payoffs.mpdp());
        let opt = solve_p1(&all_nodes(n), &inst.payoffs, inst.x0.rho()).unwrap();
        let mine: Vec<&Run> = runs.iter().filter(|r| r.instance == i).collect();
        for r in &mine {
            for k in 0..n {
                worst_opt = worst_opt.max((r.steady.x()[k] - opt.x_star[k]).abs());
            }
        }
        for (p, q) in mine.iter().zip(mine.iter().skip(1).chain(mine.first())) {
            for k in 0..n {
                worst_pair = worst_pair.max((p.steady.x()[k] - q.steady.x()[k]).abs());
            }
        }
        let b = compute_bounds(&inst.graph, &inst.x0, &inst.payoffs).unwrap();
        worst_bounds = worst_bounds
            .max((b.u_min - opt.value).abs())
            .max((b.u_max - opt.value).abs());
    }
    report.line(
        "qch-uniqueness",
        all_qch && worst_opt <= 1e-3 && worst_pair <= 2e-3,
        format!(
            "{} instances, all QCH: {all_qch}, max |x - x*| {worst_opt:.2e} (tol 1e-3), max pairwise {worst_pair:.2e} (tol 2e-3)",
            instances.len()
        ),
        t,
    );
    let t = Instant::now();
    report.line(
        "qch-bounds-collapse",
        worst_bounds <= 1e-6,
        format!("max |bound - f(rho)| {worst_bounds:.2e} (tol 1e-6)"),
        t,
    );
}

fn nash_convergence(
    report: &mut Report,
    random: (&[Instance], &[Run]),
    qch: (&[Instance], &[Run]),
) {
    let t = Instant::now();
    let mut checked = 0;
    let mut total = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for (label, (instances, runs), eps) in [
        ("random", random, residual_support(&suite_config())),
        ("qch", qch, residual_support(&qch_config())),
    ] {
        for r in runs {
            total += 1;
            if !r.converged {
                continue;
            }
            checked += 1;
            let g = &instances[r.instance].graph;
            let p = &instances[r.instance].payoffs;
            worst = worst.max(nash_gap_with(&r.steady, g, p, eps));
            if !is_nash_with(&r.steady, g, p, NASH_TOL, eps) {
                bad.push(format!("{label}#{} {}", r.instance, r.kind));
            }
        }
    }
    report.line(
        "nash-convergence",
        bad.is_empty() && checked > 0,
        format!(
            "{checked}/{total} runs converged, worst Nash gap {worst:.2e} (tol 1e-4){}",
            if bad.is_empty() { String::new() } else { format!(", failing: {}", bad.join(" ")) }
        ),
        t,
    );

    let t = Instant::now();
    let (instances, runs) = qch;
    let eps = residual_support(&qch_config());
    let mut spread: f64 = 0.0;
    let mut at = String::new();
    for r in runs.iter().filter(|r| r.converged) {
        let p = &instances[r.instance].payoffs;
        let dens: Vec<f64> = r
            .steady
            .support_with(eps)
            .into_iter()
            .map(|i| p.density(i, r.steady.x()[i]))
            .collect();
        let hi = dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = dens.iter().copied().fold(f64::INFINITY, f64::min);
        if hi - lo > spread {
            spread = hi - lo;
            at = format!("qch#{} {}", r.instance, r.kind);
        }
    }
    report.line(
        "qch-equal-densities",
        spread <= 1e-4,
        format!("max density spread on the support {spread:.2e} at {at} (tol 1e-4)"),
        t,
    );
}

fn oracle_equivalence(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..3.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..2.5)).collect();
        let rho = rng.gen_range(0.1..2.0);
        let p = PayoffSpec::quadratic(&a, &c).unwrap();
        let value = solve_p1(&[0, 1, 2], &p, rho).unwrap().value;
        let steps = 1000;
        let mut best = f64::NEG_INFINITY;
        for k0 in 0..=steps {
            for k1 in 0..=steps - k0 {
                let x0 = rho * k0 as f64 / steps as f64;
                let x1 = rho * k1 as f64 / steps as f64;
                let x = [x0, x1, (rho - x0 - x1).max(0.0)];
                best = best.max(quad_value(&a, &c, &x));
            }
        }
        // the grid can never beat the optimum
        worst = worst.max((value - best).abs()).max(best - value);
    }
    report.line(
        "oracle-solve-p1",
        worst <= 2e-3,
        format!("20 three-node instances, max |value - grid| {worst:.2e} (tol 2e-3)"),
        t,
    );

    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..3.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..2.5)).collect();
        let base: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..0.5)).collect();
        let b = [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)];
        let p = PayoffSpec::quadratic(&a, &c).unwrap();
        let prob = AllocationProblem::new(
            &p,
            base.clone(),
            vec![
                AllocationSource { node: 0, budget: b[0], destinations: vec![0, 1] },
                AllocationSource { node: 2, budget: b[1], destinations: vec![2, 1] },
            ],
        )
        .unwrap();
        let sol = solve_allocation(&prob, 1e-11).unwrap();
        let solved = quad_value(
            &a,
            &c,
            &[0, 1, 2].map(|j| base[j] + sol.received[j]),
        );
        let steps = 1000;
        let mut best = f64::NEG_INFINITY;
        for k0 in 0..=steps {
            for k1 in 0..=steps {
                let stay0 = b[0] * k0 as f64 / steps as f64;
                let stay2 = b[1] * k1 as f64 / steps as f64;
                let w = [
                    base[0] + stay0,
                    base[1] + (b[0] - stay0) + (b[1] - stay2),
                    base[2] + stay2,
                ];
                best = best.max(quad_value(&a, &c, &w));
            }
        }
        worst = worst.max((solved - best).abs());
    }
    report.line(
        "oracle-allocation",
        worst <= 1e-3,
        format!("20 two-variable problems, max |objective - grid| {worst:.2e} (tol 1e-3)"),
        t,
    );
}

fn reduction_soundness(report: &mut Report) -> Vec<StepDiagnostics> {
    let t = Instant::now();
    let cfg = IntegratorConfig {
        t_max: 30.0,
        record_every: 1,
        ..IntegratorConfig::default()
    };
    let results: Vec<(f64, bool, usize, Vec<StepDiagnostics>)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let inst = generate(4000 + s, 4 + (s as usize % 7), Family::Random);
            let red = reduce_graph(&inst.flow(), &inst.x0, &inst.payoffs);
            let removed = inst.flow().arc_count() - red.digraph.arc_count();
            let mut worst: f64 = 0.0;
            let mut same_len = true;
            let mut diags = Vec::new();
            for kind in DynamicsKind::ALL {
                let full = simulate(kind, &inst.x0, &inst.flow(), &inst.payoffs, cfg.clone()).unwrap();
                let icrg = simulate(kind, &inst.x0, &red.digraph, &inst.payoffs, cfg.clone()).unwrap();
                same_len &= full.states.len() == icrg.states.len();
                for (x, y) in full.states.iter().zip(&icrg.states) {
                    for (a, b) in x.iter().zip(y) {
                        worst = worst.max((a - b).abs());
                    }
                }
                diags.push(full.diagnostics);
                diags.push(icrg.diagnostics);
            }
            (worst, same_len, removed, diags)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let same = results.iter().all(|r| r.1);
    let removed: usize = results.iter().map(|r| r.2).sum();
    report.line(
        "reduction-soundness",
        worst <= 1e-9 && same,
        format!(
            "20 instances x 3 dynamics, {removed} arcs removed in total, max per-node deviation {worst:.2e} (tol 1e-9)"
        ),
        t,
    );
    results.into_iter().flat_map(|r| r.3).collect()
}

fn structural_validity(report: &mut Report) {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut components = 0;
    for s in 0..100u64 {
        let inst = generate(5000 + s, 3 + (s as usize % 10), Family::Random);
        let red = reduce_graph(&inst.flow(), &inst.x0, &inst.payoffs);
        let mpdp = inst.payoffs.mpdp();
        let part = mac_partition(&red, &mpdp);
        components += part.len();
        if let Err(e) = validate_partition(&part, &red, &mpdp) {
            failures.push(format!("seed {s}: {e}"));
        }
        let sg = mac_super_graph(&part, &red, &inst.x0);
        if (sg.nodes.iter().map(|q| q.mass).sum::<f64>() - inst.x0.rho()).abs() > 1e-12 {
            failures.push(format!("seed {s}: super node masses do not sum to rho"));
        }
    }
    report.line(
        "mac-partition-valid",
        failures.is_empty(),
        format!("100 ICRGs, {components} components{}", failures.first().map(|f| format!(", first failure {f}")).unwrap_or_default()),
        t,
    );

    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut pairs = 0;
    let mut mismatches = 0;
    for draw in 0..500u64 {
        let n = 2 + (draw as usize % 7);
        let g = generate(6000 + draw, n, Family::Random).graph;
        // one decimal so that ties are common
        let mpdp: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..10u8)) / 10.0).collect();
        let view = UndirectedView::from_graph(&g);
        for i in 0..n {
            for j in 0..n {
                pairs += 1;
                let fast = qc_path_exists(&view, &mpdp, i, j).unwrap();
                if fast != brute_qc_path(&g, &mpdp, &mut vec![i], j) {
                    mismatches += 1;
                }
            }
        }
    }
    report.line(
        "qc-path-vs-enumeration",
        mismatches == 0,
        format!("500 MPDP draws on graphs of 2-8 nodes, {pairs} pairs, {mismatches} mismatches"),
        t,
    );
}

fn dynamics_invariants(report: &mut Report, diags: &[StepDiagnostics], h_suite: f64) {
    let t = Instant::now();
    let steps: usize = diags.iter().map(|d| d.steps).sum();
    let drift = diags.iter().map(|d| d.max_mass_drift).fold(0.0, f64::max);
    let drop = diags.iter().map(|d| d.max_utility_drop).fold(0.0, f64::max);
    let utility_bad: usize = diags.iter().map(|d| d.utility_violations).sum();
    let corr_bad: usize = diags.iter().map(|d| d.correlation_violations).sum();
    report.line(
        "dynamics-invariants",
        drift <= 1e-9 && utility_bad == 0 && corr_bad == 0,
        format!(
            "{} runs, {steps} steps: max mass drift {drift:.2e} (tol 1e-9), max utility drop {drop:.2e} \
             (slack 1e-7*h, h <= {h_suite}), {utility_bad} utility and {corr_bad} correlation violations",
            diags.len()
        ),
        t,
    );
}

fn concavity(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
        let p = PayoffSpec::quadratic(&a, &c).unwrap();
        let nodes = all_nodes(n);
        let r1 = rng.gen_range(0.0..4.0);
        let r2 = rng.gen_range(0.0..4.0);
        let mid = f_of_rho(&nodes, &p, 0.5 * (r1 + r2)).unwrap();
        let chord = 0.5 * (f_of_rho(&nodes, &p, r1).unwrap() + f_of_rho(&nodes, &p, r2).unwrap());
        worst = worst.max(chord - mid);
    }
    report.line(
        "concavity-of-f",
        worst <= 1e-9,
        format!("200 midpoint checks, worst violation {worst:.2e} (tol 1e-9)"),
        t,
    );
}

fn coordination_anomalies(report: &mut Report) -> Vec<StepDiagnostics> {
    let mut diags = Vec::new();
    for (name, better, worse) in [
        ("ssd-beats-nbrd", DynamicsKind::Ssd, DynamicsKind::Nbrd),
        ("nbrd-beats-nrpm", DynamicsKind::Nbrd, DynamicsKind::Nrpm),
    ] {
        let t = Instant::now();
        let inst = scenario(name).unwrap();
        let run = |k| simulate(k, &inst.x0, &inst.flow(), &inst.payoffs, suite_config()).unwrap();
        let (hi, lo) = (run(better), run(worse));
        let gap = hi.final_utility - lo.final_utility;
        report.line(
            name,
            gap >= 1e-3 && hi.converged && lo.converged,
            format!(
                "U_{better} {:.4} vs U_{worse} {:.4}, gap {gap:.4} (needs >= 1e-3)",
                hi.final_utility, lo.final_utility
            ),
            t,
        );
        diags.push(hi.diagnostics);
        diags.push(lo.diagnostics);
    }
    diags
}

fn eighteen_node(report: &mut Report) -> Vec<StepDiagnostics> {
    let t = Instant::now();
    let inst = scenario("eighteen-node").unwrap();
    let b = compute_bounds(&inst.graph, &inst.x0, &inst.payoffs).unwrap();
    let runs = run_all(std::slice::from_ref(&inst), &suite_config());
    let inside = runs.iter().all(|r| b.u_min <= r.utility && r.utility <= b.u_max);
    let values: Vec<String> = runs.iter().map(|r| format!("{} {:.4}", r.kind, r.utility)).collect();
    report.line(
        "eighteen-node-sandwich",
        inside,
        format!("u_min {:.4} <= [{}] <= u_max {:.4}", b.u_min, values.join(", "), b.u_max),
        t,
    );
    runs.into_iter().map(|r| r.diagnostics).collect()
}

fn lower_bound_methods_agree(report: &mut Report, instances: &[Instance]) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in instances {
        let b = compute_bounds(&inst.graph, &inst.x0, &inst.payoffs).unwrap();
        let opts = |method| LowerBoundOptions { method, ..LowerBoundOptions::default() };
        let ve = lower_bound_with(&b.super_graph, &b.caps, &inst.payoffs, opts(LowerBoundMethod::VertexEnumeration)).unwrap();
        let pg = lower_bound_with(&b.super_graph, &b.caps, &inst.payoffs, opts(LowerBoundMethod::PolymatroidGreedy)).unwrap();
        worst = worst.max((ve.u_min - pg.u_min).abs());
    }
    report.line(
        "lower-bound-methods-agree",
        worst <= 1e-9,
        format!("{} instances, max |vertex - greedy| {worst:.2e} (tol 1e-9)", instances.len()),
        t,
    );
}

fn eventually_empty_theta(report: &mut Report, instances: &[Instance], runs: &[Run]) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = BTreeSet::new();
    for r in runs.iter().filter(|r| r.converged) {
        let inst = &instances[r.instance];
        let red = reduce_graph(&inst.flow(), &inst.x0, &inst.payoffs);
        for i in popnet_core::reduction::eventually_empty_nodes(&red) {
            checked.insert((r.instance, i));
            worst = worst.max(r.steady.x()[i]);
        }
        for i in 0..inst.node_count() {
            if !red.is_kept(i) {
                worst = worst.max(r.steady.x()[i]);
            }
        }
    }
    report.line(
        "eventually-empty-nodes",
        worst <= residual_support(&suite_config()),
        format!(
            "{} (instance, node) pairs, max steady mass {worst:.2e} (<= {:.0e})",
            checked.len(),
            residual_support(&suite_config())
        ),
        t,
    );
}

fn main() {
    let started = Instant::now();
    let mut report = Report { failures: 0 };

    let random = sandwich_instances();
    let t = Instant::now();
    let random_runs = run_all(&random, &suite_config());
    println!("simulated {} random runs in {:.1}s", random_runs.len(), t.elapsed().as_secs_f64());
    let qch = qch_instances();
    let t = Instant::now();
    let qch_runs = run_all(&qch, &qch_config());
    println!("simulated {} QCH runs in {:.1}s", qch_runs.len(), t.elapsed().as_secs_f64());

    sandwich(&mut report, &random, &random_runs);
    qch_uniqueness(&mut report, &qch, &qch_runs);
    nash_convergence(&mut report, (&random, &random_runs), (&qch, &qch_runs));
    oracle_equivalence(&mut report);
    let mut diags = reduction_soundness(&mut report);
    structural_validity(&mut report);
    concavity(&mut report);
    diags.extend(coordination_anomalies(&mut report));
    diags.extend(eighteen_node(&mut report));
    diags.extend(random_runs.iter().chain(&qch_runs).map(|r| r.diagnostics.clone()));
    dynamics_invariants(&mut report, &diags, suite_config().step);
    lower_bound_methods_agree(&mut report, &random);
    eventually_empty_theta(&mut report, &random, &random_runs);

    println!(
        "acceptance: {} failure(s) in {:.1}s",
        report.failures,
        started.elapsed().as_secs_f64()
    );
    if report.failures > 0 {
        std::process::exit(1);
    }
}
