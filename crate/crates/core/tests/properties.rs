use proptest::prelude::*;

use netreg::graph::{self, Graph};
use netreg::linalg;
use netreg::problems::{self, LossModel, NoiseSpec, ParameterVector};
use netreg::rng;
use netreg::schemes::{self, HyperParams, NrState};
use netreg::streams::{self, NodeRates};
use statrs::distribution::{ChiSquared, ContinuousCDF, Exp};

fn state_strategy(max_nodes: usize, max_dim: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (3..=max_nodes, 1..=max_dim).prop_flat_map(|(n, p)| {
        (Just(n), Just(p), prop::collection::vec(-50.0..50.0f64, n * p))
    })
}

fn to_state(n: usize, p: usize, flat: &[f64]) -> NrState {
    let s = NrState::new(flat.chunks(p).map(|c| c.to_vec()).collect()).unwrap();
    assert_eq!(s.nodes(), n);
    s
}

fn graph_for(n: usize, kind: u8, seed: u64) -> Graph {
    match kind % 3 {
        0 => Graph::complete(n).unwrap(),
        1 => Graph::ring_lattice(n, 2).unwrap(),
        _ => Graph::watts_strogatz(n, 2, 0.4, &mut rng::rng_from_seed(seed)).unwrap(),
    }
}

fn models() -> Vec<LossModel> {
    vec![
        LossModel::quadratic_diag(&[0.1, 0.4, 1.0], &[1.0, 0.0, -2.0]).unwrap(),
        LossModel::logistic_synthetic(60, 3, 0.05, 9).unwrap(),
        LossModel::nonconvex_sine(&[0.5, 1.0, 2.0], &[0.3, 0.3, 0.3], 0.4, 1.5).unwrap(),
    ]
}

proptest! {
    #[test]
    fn w_form_matches_direct_step(
        (n, p, flat) in state_strategy(12, 5),
        kind in 0u8..3,
        node_pick in 0usize..1000,
        gamma in 1e-4..0.2f64,
        a in 0.0..5.0f64,
        grad in prop::collection::vec(-10.0..10.0f64, 5),
    ) {
        let s = to_state(n, p, &flat);
        let g = graph_for(n, kind, node_pick as u64);
        let hp = HyperParams::new(gamma, a).unwrap();
        let node = node_pick % n;
        let gv = ParameterVector::new(grad[..p].to_vec()).unwrap();
        let x = schemes::nr_step(&s, &g, &hp, node, &gv).unwrap();
        let y = schemes::nr_step_w_form(&s, &g, &hp, node, &gv).unwrap();
        prop_assert!(schemes::max_coordinate_diff(&x, &y) <= 1e-12);
    }

    #[test]
    fn only_the_active_node_moves(
        (n, p, flat) in state_strategy(10, 4),
        node_pick in 0usize..1000,
        grad in prop::collection::vec(-10.0..10.0f64, 4),
    ) {
        let s = to_state(n, p, &flat);
        let g = Graph::complete(n).unwrap();
        let node = node_pick % n;
        let next = schemes::nr_step(&s, &g, &HyperParams::new(0.01, 1.0).unwrap(), node,
            &ParameterVector::new(grad[..p].to_vec()).unwrap()).unwrap();
        for j in (0..n).filter(|&j| j != node) {
            prop_assert_eq!(next.theta(j), s.theta(j));
        }
        prop_assert_eq!(next.k, s.k + 1);
    }

    #[test]
    fn consensus_gradients_sum_to_zero((n, p, flat) in state_strategy(16, 6), kind in 0u8..3) {
        let s = to_state(n, p, &flat);
        let g = graph_for(n, kind, 5);
        let max_norm = s.thetas().iter().map(|t| linalg::norm(t)).fold(0.0, f64::max);
        prop_assert!(schemes::consensus_grad_sum_norm(&s, &g).unwrap() <= 1e-10 * n as f64 * max_norm.max(1e-300));
    }

    #[test]
    fn consensus_gradient_matches_potential((n, p, flat) in state_strategy(6, 3), kind in 0u8..3) {
        let s = to_state(n, p, &flat);
        let g = graph_for(n, kind, 11);
        let h = 1e-5;
        for i in 0..n {
            let cg = schemes::consensus_grad(&s, &g, i).unwrap();
            for c in 0..p {
                let shifted = |d: f64| {
                    let mut th = s.thetas().to_vec();
                    th[i][c] += d;
                    schemes::consensus_potential(&NrState::new(th).unwrap(), &g).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                prop_assert!((fd - cg.as_slice()[c]).abs() <= 1e-4 * (1.0 + fd.abs()), "{fd} vs {}", cg.as_slice()[c]);
            }
        }
    }

    #[test]
    fn laplacian_quadratic_form(n in 3usize..15, kind in 0u8..3, x in prop::collection::vec(-5.0..5.0f64, 15)) {
        let g = graph_for(n, kind, 3);
        let l = g.laplacian();
        let x = &x[..n];
        let quad = linalg::dot(x, &l.mul_vec(x));
        let edges: f64 = g.edges().iter().map(|&(i, j)| (x[i] - x[j]).powi(2)).sum();
        prop_assert!((quad - edges).abs() <= 1e-9 * (1.0 + edges));
        prop_assert!(l.mul_vec(&vec![1.0; n]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn losses_are_nonnegative(theta in prop::collection::vec(-30.0..30.0f64, 3)) {
        for m in models() {
            prop_assert!(m.loss(&theta) >= 0.0);
        }
    }

    #[test]
    fn gradients_are_lipschitz(
        a in prop::collection::vec(-5.0..5.0f64, 3),
        b in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        for m in models() {
            let (mut ga, mut gb) = (vec![0.0; 3], vec![0.0; 3]);
            m.grad_into(&a, &mut ga);
            m.grad_into(&b, &mut gb);
            let lhs = linalg::norm(&ga.iter().zip(&gb).map(|(x, y)| x - y).collect::<Vec<_>>());
            let rhs = m.lipschitz_const() * linalg::norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
            prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12, "{:?}: {lhs} > {rhs}", m.kind());
        }
    }

    #[test]
    fn gradients_match_finite_differences(theta in prop::collection::vec(-3.0..3.0f64, 3)) {
        for m in models() {
            let t = ParameterVector::new(theta.clone()).unwrap();
            let g = m.grad_eval(&t).unwrap();
            let fd = problems::finite_diff_grad(&m, &t, problems::default_fd_step(&t)).unwrap();
            for (x, y) in g.as_slice().iter().zip(fd.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-5 * (1.0 + x.abs()), "{:?}: {x} vs {y}", m.kind());
            }
        }
    }
}

#[test]
fn interarrival_gaps_are_exponential() {
    let rates = NodeRates::new(vec![8.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
    let tr = streams::sample_trace(&rates, 20_000, 44);
    let mut gaps: Vec<f64> = tr.events.windows(2).map(|w| w[1].t - w[0].t).collect();
    gaps.insert(0, tr.events[0].t);
    gaps.sort_by(f64::total_cmp);
    let exp = Exp::new(rates.total()).unwrap();
    let n = gaps.len() as f64;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = exp.cdf(x);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    // Kolmogorov–Smirnov critical value at α = 0.001.
    let critical = 1.949 / n.sqrt();
    assert!(d < critical, "KS statistic {d} ≥ {critical}");
}

#[test]
fn merged_clocks_match_superposition() {
    let rates = NodeRates::new(vec![3.0, 1.0, 0.5, 0.5]).unwrap();
    let n = 100_000;
    let tr = streams::sample_trace_merged(&rates, n, 8);
    let counts = tr.node_counts(4);
    let stat: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let e = n as f64 * rates.share(i);
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "χ² {stat} ≥ {critical}");
    let mean_rate = n as f64 / tr.events.last().unwrap().t;
    assert!((mean_rate / rates.total() - 1.0).abs() < 0.02);
}

#[test]
fn node_noise_is_uncorrelated() {
    let model = LossModel::quadratic_diag(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
    let noise = NoiseSpec::gaussian(vec![1.0, 2.0]).unwrap();
    let mut r = rng::rng_from_seed(77);
    let draws = 20_000;
    let (mut e0, mut e1) = (vec![0.0; 2], vec![0.0; 2]);
    let mut cross = 0.0;
    let mut var1 = 0.0;
    for _ in 0..draws {
        noise.sample_into(&model, 0, &[0.0, 0.0], &mut r, &mut e0);
        noise.sample_into(&model, 1, &[0.0, 0.0], &mut r, &mut e1);
        cross += e0[0] * e1[0];
        var1 += linalg::norm_sq(&e1);
    }
    let cross = cross / draws as f64;
    // σ₁² is the total variance over both coordinates.
    assert!((var1 / draws as f64 - 4.0).abs() < 0.15);
    // Per-coordinate variances are 0.5 and 2, so the cross moment has
    // standard error 1/√draws.
    assert!(cross.abs() < 4.0 / (draws as f64).sqrt(), "{cross}");
}

#[test]
fn graph_edge_list_roundtrip() {
    let g = Graph::watts_strogatz(20, 4, 0.5, &mut rng::rng_from_seed(1)).unwrap();
    let text = g.to_edge_list();
    let back = Graph::from_edge_list(20, &text).unwrap();
    assert_eq!(back.edges(), g.edges());
    let s = graph::spectral(&g).unwrap();
    assert_eq!(s.zero_eigenvalue_count(1e-9), 1);
}
