//! Cross-validation between independent routes: simulator vs closed forms,
//! simulator vs solver, gap-law records vs queue records, and Monte Carlo
//! oracles for the conditional selection probabilities.

use burstq::analytic;
use burstq::dist::GridDensity;
use burstq::records;
use burstq::sim;
use burstq::solver;
use burstq::stats::ks_statistic;
use burstq::{protocol, PriorityDistribution, QuadratureGrid, SelectionProtocol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform01() -> PriorityDistribution {
    PriorityDistribution::standard_uniform()
}

#[test]
fn highest_first_old_task_is_running_minimum() {
    // p = 1: the resident task is exactly the running minimum of every
    // priority seen, on every path
    let proto = SelectionProtocol::highest_first();
    let dist = uniform01();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let mut state = sim::QueueState::init(2, &proto, &dist, &mut rng).unwrap();
    let mut running_min = state.resident_priorities()[0];
    for _ in 0..5000 {
        let before = state.resident_priorities()[0];
        let executed = sim::step(&mut state, &proto, &dist, &mut rng).unwrap();
        let after = state.resident_priorities()[0];
        // recover this step's arrival: either the resident changed (the
        // arrival survived) or the arrival itself was executed
        let arrival = if after != before { after } else { executed.priority };
        running_min = running_min.min(arrival);
        assert_eq!(after, running_min);
    }
}

#[test]
fn highest_first_residual_does_not_vanish() {
    // p = 1 is the record regime: the resident's age tracks the current
    // inter-record gap, so the residual fraction oscillates instead of
    // decaying; some replicas sit deep inside a gap at any fixed horizon
    let config = sim::RunConfig {
        l: 2,
        protocol: SelectionProtocol::highest_first(),
        dist: uniform01(),
        steps: 100_000,
        burnin: 0,
        seed: 77,
    };
    let fractions: Vec<f64> = sim::run_replicas(&config, 20)
        .unwrap()
        .iter()
        .map(sim::residual_fraction)
        .collect();
    let max = fractions.iter().cloned().fold(0.0f64, f64::max);
    assert!(max > 0.2, "max residual fraction {max}");
    let above = fractions.iter().filter(|&&f| f > 0.01).count();
    assert!(above >= 10, "only {above}/20 replicas above 0.01");
    // contrast: mixing at p = 0.5 drains the buffer
    let mixing = sim::run(&sim::RunConfig {
        protocol: SelectionProtocol::barabasi(0.5).unwrap(),
        seed: 78,
        ..config
    })
    .unwrap();
    assert!(sim::residual_fraction(&mixing) < 0.01);
}

#[test]
fn highest_first_priorities_drift_down() {
    // nonincreasing on every path; across replicas the law at 2t sits
    // stochastically below the law at t
    let config = sim::RunConfig {
        l: 2,
        protocol: SelectionProtocol::highest_first(),
        dist: uniform01(),
        steps: 2000,
        burnin: 0,
        seed: 900,
    };
    let outputs = sim::run_replicas(&config, 200).unwrap();
    let mut at_t = Vec::new();
    let mut at_2t = Vec::new();
    for out in &outputs {
        let samples = &out.old_priority_samples;
        assert!(samples.windows(2).all(|w| w[1] <= w[0]));
        at_t.push(samples[999]);
        at_2t.push(samples[1999]);
    }
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        let ecdf = |v: &[f64]| v.iter().filter(|&&s| s <= x).count() as f64 / v.len() as f64;
        assert!(ecdf(&at_2t) >= ecdf(&at_t));
    }
}

#[test]
fn queue_records_match_gap_law_records() {
    // extract_records applied to the p = 1 queue's arrival stream gives the
    // same record times as the resident-change steps
    let proto = SelectionProtocol::highest_first();
    let dist = uniform01();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut state = sim::QueueState::init(2, &proto, &dist, &mut rng).unwrap();
    let first = state.resident_priorities()[0];
    let mut stream = vec![first];
    let mut change_steps = vec![1u64];
    for t in 1..3000u64 {
        let before = state.resident_priorities()[0];
        let executed = sim::step(&mut state, &proto, &dist, &mut rng).unwrap();
        let after = state.resident_priorities()[0];
        let arrival = if after != before { after } else { executed.priority };
        stream.push(arrival);
        if after != before {
            change_steps.push(t + 1); // stream position of the new minimum
        }
    }
    let trace = records::extract_records(&stream);
    assert_eq!(trace.record_times, change_steps);
}

#[test]
fn proportional_pmf_matches_simulation() {
    // quadrature pmf against a Monte Carlo histogram, 3 sigma per k <= 30
    let (p, c) = (0.9, 0.2);
    let proto = SelectionProtocol::proportional(p, c).unwrap();
    let dist = PriorityDistribution::uniform(c, 1.0).unwrap();
    let grid = QuadratureGrid::with_nodes(c, 1.0, 256);
    let assembly = solver::assemble(&proto, &dist, &grid, None).unwrap();
    let solution = solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS).unwrap();
    let r1 = solution.normalized().density();
    let pmf = analytic::tau_pmf_general_upto(&proto, &dist, &r1, 30).unwrap();

    let config = sim::RunConfig {
        l: 2,
        protocol: proto,
        dist,
        steps: 2_000_000 + sim::DEFAULT_BURNIN,
        burnin: sim::DEFAULT_BURNIN,
        seed: 404,
    };
    let out = sim::run(&config).unwrap();
    let n = out.histogram.total_executed as f64;
    for k in 1..=30u32 {
        let want = pmf[k as usize - 1];
        let got = out.histogram.prob(k as u64);
        let sigma = (want * (1.0 - want) / n).sqrt();
        assert!(
            (got - want).abs() < 3.0 * sigma,
            "k={k}: sim {got:.3e} vs quadrature {want:.3e} (z = {:.2})",
            (got - want).abs() / sigma
        );
    }
}

#[test]
fn q1_matches_conditional_selection_frequency() {
    // Monte Carlo oracle for q1(s): among steps whose arrival lands near s,
    // the fraction where the arrival survives
    let (p, c, s) = (0.9, 0.2, 0.5);
    let proto = SelectionProtocol::proportional(p, c).unwrap();
    let dist = PriorityDistribution::uniform(c, 1.0).unwrap();
    let grid = QuadratureGrid::with_nodes(c, 1.0, 256);
    let assembly = solver::assemble(&proto, &dist, &grid, None).unwrap();
    let solution = solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS).unwrap();
    let r1 = solution.normalized().density();
    let q1_value = protocol::q1(&proto, &r1, s).unwrap();
    assert!((0.05..=1.0).contains(&q1_value));

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut state = sim::QueueState::init(2, &proto, &dist, &mut rng).unwrap();
    let (mut hits, mut survived) = (0u64, 0u64);
    let half_width = 0.01;
    for t in 0..4_000_000u64 {
        let executed = sim::step(&mut state, &proto, &dist, &mut rng).unwrap();
        if t < sim::DEFAULT_BURNIN {
            continue;
        }
        let arrival = if executed.waiting_time == 1 {
            executed.priority
        } else {
            state.resident_priorities()[0]
        };
        if (arrival - s).abs() < half_width {
            hits += 1;
            if executed.waiting_time != 1 {
                survived += 1;
            }
        }
    }
    let freq = survived as f64 / hits as f64;
    let sigma = (q1_value * (1.0 - q1_value) / hits as f64).sqrt();
    // the window average differs from the point value by O(width^2)
    assert!(
        (freq - q1_value).abs() < 3.0 * sigma + 1e-3,
        "q1({s}) = {q1_value:.5} vs conditional frequency {freq:.5} from {hits} hits"
    );
}

#[test]
fn general_pmf_sums_to_one_with_geometric_tail() {
    // sum_{k<=K} pmf + int q1 q^(K-1) dR telescopes to 1 for any q1
    let (p, c) = (0.9, 0.2);
    let proto = SelectionProtocol::proportional(p, c).unwrap();
    let dist = PriorityDistribution::uniform(c, 1.0).unwrap();
    let grid = QuadratureGrid::with_nodes(c, 1.0, 256);
    let assembly = solver::assemble(&proto, &dist, &grid, None).unwrap();
    let solution = solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS).unwrap();
    let r1 = solution.normalized().density();
    let kcap = 40u32;
    let pmf = analytic::tau_pmf_general_upto(&proto, &dist, &r1, kcap).unwrap();
    let mut total: f64 = pmf.iter().sum();
    let outer = QuadratureGrid::default_grid(c, 1.0);
    total += outer.integrate(|x| {
        let qx = protocol::q(&proto, &dist, x).unwrap();
        let q1x = protocol::q1(&proto, &r1, x).unwrap();
        dist.pdf(x) * q1x * qx.powi(kcap as i32 - 1)
    });
    assert!((total - 1.0).abs() < 1e-8, "total {total}");
}

#[test]
fn expected_tau_proportional_is_two() {
    let (p, c) = (0.9, 0.2);
    let proto = SelectionProtocol::proportional(p, c).unwrap();
    let dist = PriorityDistribution::uniform(c, 1.0).unwrap();
    let grid = QuadratureGrid::with_nodes(c, 1.0, 256);
    let assembly = solver::assemble(&proto, &dist, &grid, None).unwrap();
    let solution = solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS).unwrap();
    let r1 = solution.normalized().density();
    let e = analytic::expected_tau_general(&proto, &dist, &r1, 64).unwrap();
    assert!((e - 2.0).abs() < 1e-3, "expected tau {e}");
}

#[test]
fn min_of_geometric_matches_closed_form_tightly() {
    let p = 0.5;
    let dist = uniform01();
    let mut rng = ChaCha8Rng::seed_from_u64(2125);
    let mut samples: Vec<f64> = (0..1_000_000)
        .map(|_| sim::min_of_geometric_sampler(p, &dist, &mut rng).unwrap())
        .collect();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = ks_statistic(&samples, |x| {
        analytic::barabasi_stationary_cdf(p, &dist, x.clamp(0.0, 1.0)).unwrap()
    });
    assert!(ks < 0.005, "ks = {ks}");
}

#[test]
fn event_codes_independent_across_steps() {
    // lag-1 pair frequencies factorize within Monte Carlo error
    let proto = SelectionProtocol::barabasi(0.6).unwrap();
    let dist = uniform01();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut state = sim::QueueState::init(2, &proto, &dist, &mut rng).unwrap();
    let steps = 400_000usize;
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let executed = sim::step(&mut state, &proto, &dist, &mut rng).unwrap();
        trace.push(executed.event.unwrap());
    }
    let freq = |code: sim::EventCode| {
        trace.iter().filter(|&&e| e == code).count() as f64 / steps as f64
    };
    use sim::EventCode::*;
    // marginals: (1-p)/2, (1-p)/2, p
    for (code, want) in [(RandomNew, 0.2), (RandomOld, 0.2), (Priority, 0.6)] {
        let got = freq(code);
        let sigma = (want * (1.0 - want) / steps as f64).sqrt();
        assert!((got - want).abs() < 4.0 * sigma, "{code:?}: {got} vs {want}");
    }
    for (a, b) in [(Priority, Priority), (RandomOld, Priority), (RandomNew, RandomOld)] {
        let joint = trace
            .windows(2)
            .filter(|w| w[0] == a && w[1] == b)
            .count() as f64
            / (steps - 1) as f64;
        let want = freq(a) * freq(b);
        let sigma = (want * (1.0 - want) / steps as f64).sqrt();
        assert!(
            (joint - want).abs() < 4.0 * sigma,
            "pair {a:?}->{b:?}: joint {joint} vs product {want}"
        );
    }
}

#[test]
fn tau_pmf_general_rejects_invalid_density() {
    let proto = SelectionProtocol::proportional(0.5, 0.2).unwrap();
    let dist = PriorityDistribution::uniform(0.2, 1.0).unwrap();
    let grid = QuadratureGrid::default_grid(0.2, 1.0);
    let bad = GridDensity::from_function(grid, |_| 3.0);
    assert!(matches!(
        analytic::tau_pmf_general(&proto, &dist, &bad, 3),
        Err(burstq::Error::InvalidDensity(_))
    ));
}

#[test]
fn solver_grid_density_close_to_simulated_histogram_density() {
    // Nystrom-extended density integrates to the same bin masses the
    // simulator produces, coarse 10-bin comparison at 4 sigma
    let (p, c) = (0.7, 0.2);
    let proto = SelectionProtocol::proportional(p, c).unwrap();
    let dist = PriorityDistribution::uniform(c, 1.0).unwrap();
    let grid = QuadratureGrid::with_nodes(c, 1.0, 256);
    let assembly = solver::assemble(&proto, &dist, &grid, None).unwrap();
    let solution = solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS).unwrap();
    let cdf = solver::SolutionCdf::build(&assembly, &solution.r1, 4096).unwrap();

    let config = sim::RunConfig {
        l: 2,
        protocol: proto,
        dist,
        steps: 500_000 + sim::DEFAULT_BURNIN,
        burnin: sim::DEFAULT_BURNIN,
        seed: 1234,
    };
    let samples = sim::run(&config).unwrap().old_priority_samples;
    let n = samples.len() as f64;
    for bin in 0..10 {
        let lo = c + (1.0 - c) * bin as f64 / 10.0;
        let hi = c + (1.0 - c) * (bin + 1) as f64 / 10.0;
        let want = cdf.eval(hi) - cdf.eval(lo);
        let got = samples.iter().filter(|&&x| x > lo && x <= hi).count() as f64 / n;
        let sigma = (want * (1.0 - want) / n).sqrt();
        assert!(
            (got - want).abs() < 4.0 * sigma,
            "bin [{lo:.2}, {hi:.2}]: sim {got:.4} vs solver {want:.4}"
        );
    }
}
