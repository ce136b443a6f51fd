use goemax_core::channel::success_from_rates;
use goemax_core::config::ExperimentConfig;
use goemax_core::effectiveness::{below_quorum, steady_state_error, ErrorLaw};
use goemax_core::model::{AttributeChain, MetaValueModel};
use goemax_core::optimizer::{Layout, Tying};
use goemax_core::policy::threshold_from_alpha;
use goemax_core::simulator::{run_simulation, PolicyMode, SimSettings};
use goemax_core::{Activation, SchemeKind, Weights};
use proptest::prelude::*;

/// Poisson-binomial lower tail by enumerating every outcome.
fn below_quorum_brute(p: &[f64], quorum: usize) -> f64 {
    (0u32..1 << p.len())
        .filter(|mask| (mask.count_ones() as usize) < quorum)
        .map(|mask| {
            p.iter()
                .enumerate()
                .map(|(i, &pi)| if mask & (1 << i) != 0 { pi } else { 1.0 - pi })
                .product::<f64>()
        })
        .sum()
}

/// Stationary probability that the estimate differs from the state, by power
/// iteration on the joint (state, estimate) chain.
fn stale_by_power_iteration(states: usize, stay: f64, failure: f64) -> f64 {
    let mv = (1.0 - stay) / (states - 1) as f64;
    let mut dist = vec![vec![0.0; states]; states];
    dist[0][0] = 1.0;
    for _ in 0..5000 {
        let mut next = vec![vec![0.0; states]; states];
        for s in 0..states {
            for e in 0..states {
                let mass = dist[s][e];
                if mass == 0.0 {
                    continue;
                }
                for t in 0..states {
                    let p = if t == s { stay } else { mv } * mass;
                    next[t][t] += p * (1.0 - failure);
                    next[t][e] += p * failure;
                }
            }
        }
        dist = next;
    }
    (0..states).flat_map(|s| (0..states).filter(move |&e| e != s).map(move |e| (s, e))).map(|(s, e)| dist[s][e]).sum()
}

/// Beta(a, b) CDF by composite Simpson integration of the density.
fn beta_cdf_simpson(a: u32, b: u32, v: f64) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let norm = fact(a + b - 1) / (fact(a - 1) * fact(b - 1));
    let pdf = |x: f64| norm * x.powi(a as i32 - 1) * (1.0 - x).powi(b as i32 - 1);
    let n = 2000;
    let h = v / n as f64;
    let mut total = pdf(0.0) + pdf(v);
    for i in 1..n {
        total += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

fn small_config(seed: u64, isas: usize, attributes: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        num_isas: isas,
        num_attributes: attributes,
        query_size: attributes,
        ..ExperimentConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quorum_tail_matches_enumeration(p in prop::collection::vec(0.0..=1.0f64, 1..7), quorum in 0usize..8) {
        let fast = below_quorum(&p, quorum);
        prop_assert!((fast - below_quorum_brute(&p, quorum)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&fast));
    }

    #[test]
    fn quorum_tail_falls_as_links_improve(p in prop::collection::vec(0.0..=1.0f64, 1..7), i in 0usize..7, bump in 0.0..1.0f64, quorum in 1usize..7) {
        let i = i % p.len();
        let mut better = p.clone();
        better[i] = (better[i] + bump).min(1.0);
        prop_assert!(below_quorum(&better, quorum) <= below_quorum(&p, quorum) + 1e-12);
    }

    #[test]
    fn steady_error_matches_joint_chain(states in 2usize..6, stay in 0.0..1.0f64, failure in 0.0..1.0f64) {
        let chain = AttributeChain::new(0, states, stay).unwrap();
        let analytic = steady_state_error(&chain, failure, ErrorLaw::Chain);
        prop_assert!((analytic - stale_by_power_iteration(states, stay, failure)).abs() < 1e-6);
    }

    #[test]
    fn steady_error_is_bounded_and_monotone(states in 2usize..200, stay in 0.0..1.0f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let chain = AttributeChain::new(0, states, stay).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at_lo = steady_state_error(&chain, lo, ErrorLaw::Chain);
        let at_hi = steady_state_error(&chain, hi, ErrorLaw::Chain);
        prop_assert!(at_lo >= 0.0 && at_hi <= (states - 1) as f64 / states as f64 + 1e-12);
        prop_assert!(at_lo <= at_hi + 1e-12);
    }

    #[test]
    fn beta_cdf_matches_integral(a in 1u32..5, b in 1u32..5, v in 0.01..0.99f64) {
        let meta = MetaValueModel::new(a, b).unwrap();
        prop_assert!((meta.cdf(v) - beta_cdf_simpson(a, b, v)).abs() < 1e-9);
        prop_assert!((meta.cdf(meta.inverse_cdf(meta.cdf(v))) - meta.cdf(v)).abs() < 1e-9);
    }

    #[test]
    fn threshold_realizes_min_of_alpha_and_beta(alpha in 0.0..=1.0f64, beta in 0.01..=1.0f64) {
        let meta = MetaValueModel::default();
        let v_th = threshold_from_alpha(alpha, beta, &meta);
        let speak = beta * (1.0 - meta.cdf(v_th));
        prop_assert!((speak - alpha.min(beta)).abs() < 1e-9);
    }

    #[test]
    fn success_probability_orders_with_interference(
        signal in prop::collection::vec(1e2..1e5f64, 1..4),
        interference in prop::collection::vec(1e2..1e5f64, 0..3),
        extra in 1e2..1e5f64,
    ) {
        let (gamma, noise) = (10.0, 1e-15);
        let base = success_from_rates(&signal, &interference, gamma, noise);
        let mut more = interference.clone();
        more.push(extra);
        let worse = success_from_rates(&signal, &more, gamma, noise);
        if let (Ok(base), Ok(worse)) = (base, worse) {
            prop_assert!((0.0..=1.0 + 1e-9).contains(&base));
            prop_assert!(worse <= base + 1e-9);
        }
    }

    #[test]
    fn layout_round_trips(seed in 0u64..50, isas in 2usize..5, attributes in 1usize..4, tying in prop::sample::select(vec![Tying::Full, Tying::PerAttribute, Tying::Global])) {
        let inst = small_config(seed, isas, attributes).instance(0).unwrap();
        let layout = Layout::new(&inst, tying);
        let x: Vec<f64> = (0..layout.len()).map(|i| (i as f64 * 0.37).fract()).collect();
        prop_assert_eq!(layout.variables(&layout.activation(&inst, &x)), x);
    }

    #[test]
    fn features_respect_their_ranges(seed in 0u64..50, isas in 2usize..5, attributes in 1usize..4, level in 0.0..=1.0f64) {
        let inst = small_config(seed, isas, attributes).instance(0).unwrap();
        let r = inst.evaluate(&Activation::constant(isas, attributes, level), Weights::balanced());
        prop_assert!(r.euu >= 0.0 && r.erc >= 0.0 && r.ede >= 0.0);
        for j in 0..inst.slots() {
            let states = inst.chains[inst.schedule.attribute_at(j)].states() as f64;
            prop_assert!((0.0..=1.0).contains(&r.failure[j]));
            prop_assert!((r.success[j] - (1.0 - r.failure[j])).abs() < 1e-12);
            prop_assert!(r.error[j] >= 0.0 && r.error[j] <= (states - 1.0) / states + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_reproducible(seed in 0u64..1000, level in 0.0..=1.0f64, scheme in prop::sample::select(SchemeKind::ALL.to_vec())) {
        let inst = small_config(seed, 3, 2).instance(0).unwrap();
        let mode = PolicyMode::FixedAlpha(Activation::constant(3, 2, level));
        let settings = SimSettings::new(50, seed);
        prop_assert_eq!(run_simulation(&inst, &mode, scheme, &settings, 1), run_simulation(&inst, &mode, scheme, &settings, 1));
    }
}
