//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::time::{Duration, Instant};

use goemax_core::channel::{signal_rate, success_from_rates, success_mc_from_rates};
use goemax_core::config::ExperimentConfig;
use goemax_core::effectiveness::{steady_state_error, ErrorLaw, Weights};
use goemax_core::instance::{Activation, Instance};
use goemax_core::model::{slant_distance, AttributeChain};
use goemax_core::optimizer::{
    weight_balance_residual, grid_search_oracle, large_state_alpha, solve_algorithm1, OptimizerConfig, Tying, WeightRule,
};
use goemax_core::policy::{generation_probability, scheme_betas, PeerKnowledge, SchemeKind, ThresholdPolicy};
use goemax_core::rng::{substream, StreamRng};
use goemax_core::simulator::{
    evaluate_self_decision, run_simulation, sweep_states, sweep_threshold, threshold_roots, write_states_csv,
    write_threshold_csv, PolicyMode, PowerMode, SimSettings,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

/// Closed-form success probability against 10^6 fading draws.
fn channel_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = substream(101, &[]);
    let (gamma, noise, a) = (10.0, 1e-15, 3.8);
    let draws = 1_000_000;
    let normal = Normal::new(0.0, 60.0).unwrap();
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let c = rng.random_range(1..=4usize);
        let n_i = rng.random_range(0..=3usize);
        let rate = |rng: &mut StreamRng| {
            let x: f64 = normal.sample(rng);
            let v: f64 = rng.random_range(0.2..1.0);
            signal_rate(slant_distance(x.abs(), 7.0), a, 0.1 * v * v * v)
        };
        let signal: Vec<f64> = (0..c).map(|_| rate(&mut rng)).collect();
        let interference: Vec<f64> = (0..n_i).map(|_| rate(&mut rng) / gamma).collect();
        let exact = success_from_rates(&signal, &interference, gamma, noise).unwrap();
        let mc = success_mc_from_rates(&signal, &interference, gamma, noise, draws, &mut substream(102, &[i]));
        let sigma = (exact * (1.0 - exact) / draws as f64).sqrt().max(1.0 / draws as f64);
        let z = (exact - mc).abs() / sigma;
        worst = worst.max(z);
        ok += usize::from(z <= 3.0);
    }
    let mut single_err: f64 = 0.0;
    for &(d, rho) in &[(10.0, 0.1), (50.0, 0.01), (120.0, 0.1), (7.0, 1e-6)] {
        let lambda = signal_rate(d, a, rho);
        let p = success_from_rates(&[lambda], &[], gamma, noise).unwrap();
        let exact = (-gamma * noise * f64::powf(d, a) / rho).exp();
        single_err = single_err.max((p - exact).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        ok >= 95 && single_err <= 1e-12 && within(elapsed, 120),
        format!("{ok}/100 within 3 sigma (worst z {worst:.2}); single-link error {single_err:.1e}; {:.1}s", elapsed.as_secs_f64()),
    )
}

fn small_config(seed: u64, isas: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        num_isas: isas,
        num_attributes: 1,
        query_size: 1,
        ..ExperimentConfig::default()
    }
}

/// Delivery-failure probability and steady error against simulation.
fn proposition_one() -> Outcome {
    let start = Instant::now();
    let mut rng = substream(201, &[]);
    let mut worst_fail: f64 = 0.0;
    let mut worst_err: f64 = 0.0;
    let mut count = 0;
    let mut seed = 0u64;
    while count < 20 {
        seed += 1;
        let isas = rng.random_range(1..=4usize);
        let cfg = small_config(seed, isas);
        let inst = cfg.instance(0).unwrap();
        if inst.topology.observers(0).is_empty() {
            continue;
        }
        count += 1;
        let mut alpha = Activation::constant(isas, 1, 0.0);
        for k in 0..isas {
            alpha.set(k, 0, rng.random_range(0.05..1.0));
        }
        let settings = SimSettings {
            power: PowerMode::Mean,
            ..SimSettings::new(100_000, seed)
        };
        let r = run_simulation(&inst, &PolicyMode::FixedAlpha(alpha.clone()), SchemeKind::Uniform, &settings, 0);
        let analytic = inst.slot_failure(&alpha, 0);
        worst_fail = worst_fail.max((analytic - r.failure_rate[0]).abs());

        let chain = AttributeChain::new(0, rng.random_range(2..=12), rng.random_range(0.0..0.9)).unwrap();
        let mut sim_chain = chain.clone();
        let mut crng = substream(202, &[seed]);
        let mut estimate = 0;
        let mut stale = 0usize;
        let steps = 1_000_000;
        for _ in 0..steps {
            sim_chain.step(&mut crng);
            if crng.random::<f64>() >= analytic {
                estimate = sim_chain.state();
            }
            stale += usize::from(estimate != sim_chain.state());
        }
        let pe = steady_state_error(&chain, analytic, ErrorLaw::Chain);
        worst_err = worst_err.max((pe - stale as f64 / steps as f64).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_fail <= 0.02 && worst_err <= 0.01 && within(elapsed, 300),
        format!("max |E_n - empirical| {worst_fail:.4}; max |P_e - chain| {worst_err:.4}; {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Generation rates per scheme.
fn beta_rates() -> Outcome {
    let cfg = ExperimentConfig {
        num_isas: 4,
        num_attributes: 1,
        query_size: 1,
        geometry: goemax_core::config::GeometrySection {
            observe_prob: 1.0,
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let inst = cfg.instance(0).unwrap();
    let settings = SimSettings::new(100_000, 7);
    let rate = |scheme, alpha: f64| {
        run_simulation(&inst, &PolicyMode::FixedAlpha(Activation::constant(4, 1, alpha)), scheme, &settings, 0)
    };
    let uniform = rate(SchemeKind::Uniform, 0.5).generation_rate;
    let change = rate(SchemeKind::ChangeAware, 0.5).generation_rate;
    let mut semantic_gap: f64 = 0.0;
    let mut detail = String::new();
    for alpha in [0.0, 0.3, 0.8] {
        let r = rate(SchemeKind::SemanticsAware, alpha);
        let pe = r.error_rate[0];
        let predicted = generation_probability(SchemeKind::SemanticsAware, &inst.chains[0], pe, true);
        semantic_gap = semantic_gap.max((predicted - r.generation_rate).abs());
        detail.push_str(&format!(" [alpha {alpha}: P_e {pe:.3}, rate {:.4} vs {predicted:.4}]", r.generation_rate));
    }
    outcome(
        (uniform - 1.0).abs() <= 0.01 && (change - 0.8).abs() <= 0.01 && semantic_gap <= 0.015,
        format!("uniform {uniform:.4}, change-aware {change:.4}, semantics-aware max gap {semantic_gap:.4};{detail}"),
    )
}

/// Speak rate equals min(beta, alpha) under the threshold rule.
fn threshold_identity() -> Outcome {
    let mut rng = substream(401, &[]);
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for i in 0..10u64 {
        let scheme = SchemeKind::ALL[(i % 3) as usize];
        let states = rng.random_range(3..=12);
        let stay = rng.random_range(0.05..0.6);
        let alpha = rng.random_range(0.05..1.0);
        let cfg = ExperimentConfig {
            seed: 400 + i,
            num_isas: 2,
            num_attributes: 1,
            query_size: 1,
            states,
            stay_prob: stay,
            geometry: goemax_core::config::GeometrySection {
                observe_prob: 1.0,
                ..Default::default()
            },
            ..ExperimentConfig::default()
        };
        let inst = cfg.instance(0).unwrap();
        let tied = Activation::constant(2, 1, alpha);
        let beta = scheme_betas(&inst, scheme, &tied, 50);
        let policy = ThresholdPolicy::from_alpha(&inst, &tied, &beta);
        let settings = SimSettings {
            power: PowerMode::Mean,
            ..SimSettings::new(50_000, 400 + i)
        };
        let r = run_simulation(&inst, &PolicyMode::Threshold(policy), scheme, &settings, 0);
        let target = r.generation_rate.min(alpha);
        let gap = (r.speak_rate - target).abs();
        worst = worst.max(gap);
        detail.push_str(&format!(" [{} a={alpha:.2} b={:.3}: {:.4}]", scheme.name(), r.generation_rate, r.speak_rate));
    }
    outcome(worst <= 0.01, format!("max |speak - min(beta, alpha)| {worst:.4};{detail}"))
}

enum Premise {
    Accepted(Instance),
    Kink,
    Rejected,
}

/// Small instance meeting the premises of the weight condition, checked
/// with the grid oracle alone: the weight maximizing the constrained minimum
/// is interior and beats both ends by more than the grid error, the constrained grid minimizer there sits on the
/// edge of the feasible grid, and that minimizer moves continuously with the
/// weight (no tie between separate minimizers).
fn premise_instance(seed: u64) -> Premise {
    premise_check(seed).unwrap_or(Premise::Rejected)
}

fn premise_check(seed: u64) -> Option<Premise> {
    let mut rng = substream(501, &[seed]);
    let isas = rng.random_range(2..=3usize);
    let query = rng.random_range(1..=2usize);
    let cfg = ExperimentConfig {
        seed,
        num_isas: isas,
        num_nmas: 2,
        quorum: Some(1),
        num_attributes: 2,
        query_size: query,
        geometry: goemax_core::config::GeometrySection {
            observe_prob: 1.0,
            ..Default::default()
        },
        functions: goemax_core::config::FunctionSection {
            kappa: [rng.random_range(0.2..3.0), rng.random_range(0.2..3.0), 1.0],
            c_h: rng.random_range(0.5..200.0),
            p0_dbm: 20.0,
        },
        ..ExperimentConfig::default()
    };
    let mut inst = cfg.instance(0).ok()?;
    let top = inst.evaluate(&Activation::constant(isas, 2, 1.0), Weights::balanced()).euu;
    inst.euu_min = inst.funcs.g(3, top * rng.random_range(0.2..0.8));
    const STEP: f64 = 0.02;
    let oracle = |w1: f64| grid_search_oracle(&inst, Tying::PerAttribute, Weights::new(w1), STEP).ok();
    let phi = |w1: f64| oracle(w1).and_then(|g| g.objective);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.001, 0.999);
    while b - a > 1e-3 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if phi(c)? >= phi(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let w = 0.5 * (a + b);
    let peak = phi(w)?;
    if !(0.05..=0.95).contains(&w) || peak <= phi(0.001)?.max(phi(0.999)?) * 1.005 {
        return Some(Premise::Rejected);
    }
    let x = oracle(w)?.variables?;
    let layout = goemax_core::optimizer::Layout::new(&inst, Tying::PerAttribute);
    let binds = (0..x.len()).any(|i| {
        let mut y = x.clone();
        y[i] -= STEP;
        y[i] >= -1e-12 && inst.constraint_slack(&inst.evaluate(&layout.activation(&inst, &y), Weights::new(w))) < 0.0
    });
    if !binds {
        return Some(Premise::Rejected);
    }
    let left = oracle(w - 0.02)?.variables?;
    let right = oracle(w + 0.02)?.variables?;
    let jump = left.iter().zip(&right).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
    Some(if jump > 0.1 { Premise::Kink } else { Premise::Accepted(inst) })
}

/// The activation optimizer against the exhaustive grid.
fn optimizer_optimality() -> Outcome {
    let start = Instant::now();
    let cfg = OptimizerConfig {
        tying: Tying::PerAttribute,
        weight_rule: WeightRule::Equalize,
        ..OptimizerConfig::default()
    };
    let (mut pass, mut tried) = (0, 0);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    let mut seed = 0u64;
    let mut accepted = 0;
    let mut kinks = 0;
    let mut objective_ok = 0;
    while accepted < 20 && seed < 6000 {
        seed += 1;
        tried += 1;
        let inst = match premise_instance(seed) {
            Premise::Accepted(inst) => inst,
            Premise::Kink => {
                kinks += 1;
                continue;
            }
            Premise::Rejected => continue,
        };
        accepted += 1;
        let sol = match solve_algorithm1(&inst, &cfg) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let grid = grid_search_oracle(&inst, Tying::PerAttribute, sol.w_star, 0.01).unwrap();
        let excess = sol.objective - grid.objective.unwrap_or(f64::INFINITY);
        let balance = weight_balance_residual(&inst, &sol.report);
        objective_ok += usize::from(excess <= 1e-3);
        worst = (worst.0.max(excess), worst.1.max(sol.constraint_gap), worst.2.max(balance));
        if excess <= 1e-3 && sol.constraint_gap <= 1e-3 && balance <= 0.01 {
            pass += 1;
        } else {
            failures.push(format!("seed {seed}: excess {excess:.2e} gap {:.1e} balance {balance:.3} w1 {:.3}", sol.constraint_gap, sol.w_star.w1));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        accepted == 20 && pass == 20 && within(elapsed, 600),
        format!(
            "{pass}/{accepted} instances ({tried} drawn, {kinks} with tied minimizers set aside; objective within 1e-3 on {objective_ok}); worst excess {:.2e}, gap {:.1e}, weight balance residual {:.4}; {:.1}s{}",
            worst.0,
            worst.1,
            worst.2,
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

/// Locally estimated thresholds against the centralized oracle.
fn self_decision() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut means = Vec::new();
    for scheme in SchemeKind::ALL {
        match evaluate_self_decision(&cfg, scheme, &PeerKnowledge::default(), 0.01) {
            Ok(r) => {
                pass &= r.accuracy >= 0.92;
                let local_mean = r.local_alpha.iter().flatten().sum::<f64>() / r.local_alpha.iter().map(Vec::len).sum::<usize>() as f64;
                let central_mean = r.central_alpha.iter().sum::<f64>() / r.central_alpha.len() as f64;
                means.push(central_mean);
                detail.push(format!(
                    "{} accuracy {:.3} (G central {:.3e}, local {:.3e}; EUU {:.3}/{:.3}; alpha central {:.3}, local {:.3})",
                    scheme.name(),
                    r.accuracy,
                    r.central_objective.mean,
                    r.local_objective.mean,
                    r.central_euu.mean,
                    r.local_euu.mean,
                    central_mean,
                    local_mean
                ));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{}: {e}", scheme.name()));
            }
        }
    }
    // Reported activation levels: semantics-aware, uniform, change-aware.
    let reported = [0.64, 0.64, 0.67];
    let mut qualitative = means.len() == 3;
    if qualitative {
        let order = |x: &[f64]| [x[2] > x[0], x[2] > x[1], (x[0] - x[1]).abs() < 0.01];
        let ours = [means[2], means[0], means[1]];
        qualitative = ours.iter().zip(&reported).all(|(a, b)| (a - b).abs() <= 0.1) && order(&ours) == order(&reported);
    }
    outcome(
        pass && qualitative,
        format!(
            "{}; alpha levels within 0.1 of 0.64/0.64/0.67 with the same ordering: {qualitative}; {:.1}s",
            detail.join("; "),
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Large state spaces: the error limit and the closed-form activation.
fn large_states() -> Outcome {
    let chain = AttributeChain::new(0, 10_000, 0.2).unwrap();
    let pe = steady_state_error(&chain, 0.5, ErrorLaw::Chain);
    let pe_printed = steady_state_error(&chain, 0.5, ErrorLaw::AsPrinted);
    let part1 = (pe - 0.5).abs() <= 0.01;
    let cfg = ExperimentConfig {
        states: 10_000,
        optimizer: OptimizerConfig {
            tying: Tying::Global,
            ..OptimizerConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let inst = cfg.instance(0).unwrap();
    let (part2, detail2) = match solve_algorithm1(&inst, &cfg.optimizer) {
        Ok(sol) => {
            let mut worst: f64 = 0.0;
            let mut errors = 0;
            let mut values = Vec::new();
            for j in 0..inst.slots() {
                let n = inst.schedule.attribute_at(j);
                for &k in inst.topology.observers(n) {
                    match large_state_alpha(&inst, &sol.alpha_star, k, n, sol.eta_star, sol.w_star) {
                        Ok(a) => {
                            worst = worst.max((a - sol.variables[0]).abs());
                            values.push(a);
                        }
                        Err(_) => errors += 1,
                    }
                }
            }
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            (
                errors == 0 && worst <= 0.05,
                format!(
                    "optimizer alpha {:.4} (eta {:.3e}), closed form mean {mean:.4}, max gap {worst:.4}, {errors} degenerate",
                    sol.variables[0], sol.eta_star
                ),
            )
        }
        Err(e) => (false, format!("optimizer failed: {e}")),
    };
    outcome(
        part1 && part2,
        format!("P_e(E=0.5, I=1e4) = {pe:.4} (printed law {pe_printed:.4}); {detail2}"),
    )
}

/// Threshold sweep roots and state sweep monotonicity.
fn figures() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let instances: Vec<Instance> = (0..cfg.simulation.seeds as u64).map(|s| cfg.instance(s).unwrap()).collect();
    let settings = SimSettings::new(cfg.simulation.intervals, cfg.seed);
    let rows = sweep_threshold(&instances, &SchemeKind::ALL, &cfg.sweep.v_th_grid(), &settings);
    let level = cfg.goe_functions().g_inv(3, cfg.euu_min);
    let mut roots_ok = true;
    let mut detail = Vec::new();
    for scheme in SchemeKind::ALL {
        let roots = threshold_roots(&rows, scheme, level);
        roots_ok &= roots.len() == 2;
        let peak = rows.iter().filter(|r| r.scheme == scheme).map(|r| r.euu_mean).fold(0.0, f64::max);
        let at_zero = rows.iter().find(|r| r.scheme == scheme && r.v_th == 0.0).map_or(f64::NAN, |r| r.euu_mean);
        let listed: Vec<String> = roots.iter().map(|(v, a)| format!("v_th {v:.3}/alpha {a:.3}")).collect();
        detail.push(format!("{} {} roots [{}] (EUU at v_th=0 {at_zero:.3}, peak {peak:.3})", scheme.name(), roots.len(), listed.join(", ")));
    }
    let again = sweep_threshold(&instances, &SchemeKind::ALL, &cfg.sweep.v_th_grid(), &settings);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_threshold_csv(&mut a, &[], &rows).unwrap();
    write_threshold_csv(&mut b, &[], &again).unwrap();
    let fig2_elapsed = start.elapsed() / 2;

    let states = sweep_states(&cfg, &cfg.sweep.states_grid, &cfg.sweep.query_grid, 0.01).unwrap();
    let states_again = sweep_states(&cfg, &cfg.sweep.states_grid, &cfg.sweep.query_grid, 0.01).unwrap();
    let (mut c, mut d) = (Vec::new(), Vec::new());
    write_states_csv(&mut c, &[], &states).unwrap();
    write_states_csv(&mut d, &[], &states_again).unwrap();
    let lookup = |i: usize, q: usize| states.iter().find(|r| r.states == i && r.query_size == q).and_then(|r| r.g_min_feasible);
    let mut monotone = true;
    for &q in &cfg.sweep.query_grid {
        for w in cfg.sweep.states_grid.windows(2) {
            match (lookup(w[0], q), lookup(w[1], q)) {
                (Some(x), Some(y)) => monotone &= y >= x,
                _ => monotone = false,
            }
        }
    }
    for &i in &cfg.sweep.states_grid {
        for w in cfg.sweep.query_grid.windows(2) {
            match (lookup(i, w[0]), lookup(i, w[1])) {
                (Some(x), Some(y)) => monotone &= y >= x,
                _ => monotone = false,
            }
        }
    }
    let table: Vec<String> = states
        .iter()
        .map(|r| format!("({},{})={}", r.states, r.query_size, r.g_min_feasible.map_or("-".into(), |g| format!("{g:.3e}"))))
        .collect();
    let deterministic = a == b && c == d;
    let elapsed = start.elapsed();
    outcome(
        roots_ok && monotone && deterministic && within(fig2_elapsed, 900),
        format!(
            "{}; state sweep monotone {monotone} [{}]; deterministic {deterministic}; sweep {:.1}s",
            detail.join("; "),
            table.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("channel closed form vs Monte Carlo", channel_oracle),
        ("delivery failure and steady error vs simulation", proposition_one),
        ("generation rates", beta_rates),
        ("threshold identity", threshold_identity),
        ("optimizer vs grid oracle", optimizer_optimality),
        ("self-decision accuracy", self_decision),
        ("large state spaces", large_states),
        ("threshold and state sweeps", figures),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| f == &id) {
            continue;
        }
        let r = check();
        println!("criterion {id} {}: {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
