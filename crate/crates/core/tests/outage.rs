mod common;

use common::*;
use num_complex::Complex64;
use relaynet::channel::{sample_relay_side, InputPolicy, NetworkTopology, Node};
use relaynet::outage::{decide_strategy, optimize_compression, wilson_interval};
use relaynet::rng::{stream, Domain};
use relaynet::{estimate_curves, DecisionRule, Estimator, OutageSetup, RateMode};

fn setup(topo: NetworkTopology, n_outer: usize, n_inner: usize, seed: u64) -> OutageSetup {
    let mut s = OutageSetup::new(topo);
    s.n_outer = n_outer;
    s.n_inner = n_inner;
    s.seed = seed;
    s
}

#[test]
fn point_to_point_matches_rayleigh_closed_form() {
    let s = setup(dead_relay_topology(2), 2000, 20, 3);
    let rates = [0.5, 1.0, 2.0];
    let curves = estimate_curves(&s, &[Estimator::Fixed(V::full(2)), Estimator::CutsetLowerBound], &rates).unwrap();
    for c in &curves {
        for e in c {
            let want = rayleigh_outage(e.r, 1.0);
            assert!((e.epsilon_hat - want).abs() <= 3.0 * e.half_width(), "r={}: {} vs {want} ± {}", e.r, e.epsilon_hat, e.half_width());
        }
    }
}

#[test]
fn constant_rule_matches_fixed_strategy() {
    let s = setup(NetworkTopology::two_relay_default(), 300, 100, 4);
    let rates = [1.0, 2.0, 3.0];
    for v in V::full(2).subsets() {
        let c = estimate_curves(&s, &[Estimator::Fixed(v), Estimator::Selective(DecisionRule::FixedV(v))], &rates).unwrap();
        for (a, b) in c[0].iter().zip(&c[1]) {
            let tol = 2.0 * a.half_width().max(b.half_width());
            assert!((a.epsilon_hat - b.epsilon_hat).abs() <= tol, "V={v} r={}: {} vs {}", a.r, a.epsilon_hat, b.epsilon_hat);
        }
    }
}

#[test]
fn argmin_choice_holds_up_on_fresh_sample() {
    let mut s = setup(NetworkTopology::two_relay_default(), 1, 200, 0);
    let grid = [0.5, 1.0, 2.0];
    s.compression_grid = grid.to_vec();
    let (r, fresh_n) = (3.0, 600);
    let rho = [0.0, 0.0];
    for i in 0..4 {
        let view = sample_relay_side(&s.topology, &mut stream(21, Domain::RelaySide, i));
        let rule = DecisionRule::EmpiricalArgmin { n_inner: 200 };
        let chosen = decide_strategy(&s, &view, &InputPolicy::independent(2), r, rule, &mut stream(21, Domain::DestinationSide, i)).unwrap();
        let fresh = completions(&s.topology, &view, fresh_n, &mut stream(22, Domain::DestinationSide, i));
        let best = |v: V| {
            combos(&grid, v)
                .iter()
                .map(|m| conditional_outage(&s.topology, &fresh, v, RateMode::Selective, &rho, &compression(&s.topology, v, m), r))
                .fold(1.0, f64::min)
        };
        let mine = best(chosen);
        for v in V::full(2).subsets() {
            let other = best(v);
            let (lo, hi) = wilson_interval(other, fresh_n);
            assert!(mine <= other + (hi - lo), "draw {i}: chose {chosen} at {mine}, {v} has {other}");
        }
    }
}

#[test]
fn compression_search_matches_exhaustive_scan() {
    let topo = NetworkTopology::rayleigh(1, 1.0, vec![10.0], vec![1.0], 1.0, 1.0).unwrap();
    let s = setup(topo.clone(), 1, 400, 0);
    let mut informative = 0;
    for i in 0..6 {
        let mut view = sample_relay_side(&topo, &mut stream(31, Domain::RelaySide, i));
        view.set_gain(Node::Source, Node::Relay(1), Complex64::new(30.0, 0.0)).unwrap();
        let r = 2.0 + 0.4 * i as f64;
        let chosen = optimize_compression(&s, &view, V::full(1), &InputPolicy::independent(1), r, &mut stream(32, Domain::DestinationSide, i)).unwrap();
        let draws = completions(&topo, &view, s.n_inner, &mut stream(32, Domain::DestinationSide, i));
        let scan: Vec<f64> = s
            .compression_grid
            .iter()
            .map(|g| conditional_outage(&topo, &draws, V::full(1), RateMode::Fixed, &[0.0], &compression(&topo, V::full(1), &[*g]), r))
            .collect();
        let min = scan.iter().copied().fold(1.0, f64::min);
        let sigma = chosen.get(1).unwrap();
        let at = s.compression_grid.iter().position(|g| *g == sigma).unwrap();
        assert_eq!(scan[at], min, "r={r}: scan {scan:?}, chose {sigma}");
        if min > 0.0 && min < 1.0 {
            informative += 1;
            // A clean observation makes the penalty-limited cut bind, which
            // coarser compression relaxes.
            assert!(sigma >= 1.5, "r={r}: chose {sigma} with scan {scan:?}");
        }
    }
    assert!(informative > 0);
}

#[test]
fn curves_are_nondecreasing_in_rate() {
    let rates = [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0];
    for seed in 0..3 {
        let s = setup(NetworkTopology::two_relay_default(), 30, 100, seed);
        let est = [
            Estimator::Fixed(V::EMPTY),
            Estimator::Fixed(V::full(2)),
            Estimator::Fixed(V::from_relays(&[2])),
            Estimator::Selective(DecisionRule::EmpiricalArgmin { n_inner: 100 }),
            Estimator::Selective(DecisionRule::FeasibilityHeuristic),
            Estimator::CutsetLowerBound,
        ];
        for (k, c) in estimate_curves(&s, &est, &rates).unwrap().iter().enumerate() {
            for w in c.windows(2) {
                assert!(w[0].epsilon_hat <= w[1].epsilon_hat, "seed {seed} estimator {k}: {} > {}", w[0].epsilon_hat, w[1].epsilon_hat);
            }
            for e in c {
                assert!(0.0 <= e.ci_lo && e.ci_lo <= e.epsilon_hat && e.epsilon_hat <= e.ci_hi && e.ci_hi <= 1.0);
            }
        }
    }
}

#[test]
fn heuristic_lets_near_relay_decode_at_low_rate() {
    let s = setup(NetworkTopology::two_relay_default(), 1, 100, 0);
    let inputs = InputPolicy::independent(2);
    let n = 500;
    let decoding = (0..n)
        .filter(|&i| {
            let view = sample_relay_side(&s.topology, &mut stream(41, Domain::RelaySide, i));
            let v = decide_strategy(&s, &view, &inputs, 0.5, DecisionRule::FeasibilityHeuristic, &mut stream(0, Domain::Auxiliary, i)).unwrap();
            !v.contains(1)
        })
        .count();
    assert!(decoding as f64 >= 0.9 * n as f64, "{decoding}/{n}");
}
