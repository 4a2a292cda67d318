//! Asynchronous event schedules from independent Poisson streams.
//!
//! Node `i` produces data at rate `μᵢ`. The superposition is a Poisson
//! process of rate `μ = Σμᵢ`; each of its events belongs to node `i` with
//! probability `μᵢ/μ`. Tick `k` of the superposed clock is the `k`-th update.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Positive per-node Poisson rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NodeRates {
    mu: Vec<f64>,
    total: f64,
    /// Cumulative sums of `mu`, used to pick the active node.
    cumulative: Vec<f64>,
}

impl NodeRates {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Config("at least one node rate is required".into()));
        }
        if let Some(bad) = mu.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::Config(format!("node rates must be positive and finite (got {bad})")));
        }
        let mut cumulative = Vec::with_capacity(mu.len());
        let mut acc = 0.0;
        for m in &mu {
            acc += m;
            cumulative.push(acc);
        }
        Ok(Self {
            total: acc,
            mu,
            cumulative,
        })
    }

    pub fn uniform(n: usize, rate: f64) -> Result<Self> {
        Self::new(vec![rate; n])
    }

    pub fn rates(&self) -> &[f64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Heterogeneity ratio `ξ = μ_max/μ_min ≥ 1`.
    pub fn xi(&self) -> f64 {
        self.max() / self.min()
    }

    /// Probability that an event of the superposed stream belongs to `i`.
    pub fn share(&self, i: usize) -> f64 {
        self.mu[i] / self.total
    }

    fn pick(&self, u: f64) -> usize {
        let target = u * self.total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.mu.len() - 1)
    }
}

impl TryFrom<Vec<f64>> for NodeRates {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NodeRates> for Vec<f64> {
    fn from(r: NodeRates) -> Self {
        r.mu
    }
}

/// One update: tick `k` (from 1), its arrival time and the active node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub k: u64,
    pub t: f64,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub events: Vec<Event>,
    pub seed: u64,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn empty(seed: u64) -> Self {
        Self {
            events: Vec::new(),
            seed,
        }
    }

    /// CSV with header `k,t,node`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t,node\n");
        for e in &self.events {
            let _ = writeln!(s, "{},{},{}", e.k, e.t, e.node);
        }
        s
    }

    /// Per-node event counts.
    pub fn node_counts(&self, nodes: usize) -> Vec<u64> {
        let mut c = vec![0u64; nodes];
        for e in &self.events {
            c[e.node] += 1;
        }
        c
    }
}

/// Superposed-clock generator; yields events in order indefinitely.
struct SuperposedClock<'a> {
    rates: &'a NodeRates,
    rng: SimRng,
    t: f64,
    k: u64,
}

impl Iterator for SuperposedClock<'_> {
    type Item = Event;
    fn next(&mut self) -> Option<Event> {
        // Inverse-transform exponential, then the owning node: two draws.
        let gap = -rng::open_unit(&mut self.rng).ln() / self.rates.total;
        let node = self.rates.pick(rng::open_unit(&mut self.rng));
        self.t += gap;
        self.k += 1;
        Some(Event {
            k: self.k,
            t: self.t,
            node,
        })
    }
}

fn clock(rates: &NodeRates, seed: u64) -> SuperposedClock<'_> {
    SuperposedClock {
        rates,
        rng: rng::rng_from_seed(seed),
        t: 0.0,
        k: 0,
    }
}

/// Exactly `num_events` events of the superposed process.
pub fn sample_trace(rates: &NodeRates, num_events: usize, seed: u64) -> EventTrace {
    EventTrace {
        events: clock(rates, seed).take(num_events).collect(),
        seed,
    }
}

/// All events with `t_k ≤ horizon`; stops at the first arrival past it.
///
/// Shares its random stream with [`sample_trace`], so the result is a prefix
/// of the fixed-length trace for the same seed.
pub fn sample_trace_until(rates: &NodeRates, horizon: f64, seed: u64) -> Result<EventTrace> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("time horizon must be positive (got {horizon})")));
    }
    Ok(EventTrace {
        events: clock(rates, seed).take_while(|e| e.t <= horizon).collect(),
        seed,
    })
}

#[derive(Debug, PartialEq)]
struct Pending {
    t: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on time; node index breaks ties deterministically.
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Same law as [`sample_trace`], built by running one exponential clock per
/// node and merging them through a priority queue.
pub fn sample_trace_merged(rates: &NodeRates, num_events: usize, seed: u64) -> EventTrace {
    let mut r = rng::rng_from_seed(seed);
    let mut heap: BinaryHeap<Pending> = rates
        .rates()
        .iter()
        .enumerate()
        .map(|(node, &mu)| Pending {
            t: -rng::open_unit(&mut r).ln() / mu,
            node,
        })
        .collect();
    let mut events = Vec::with_capacity(num_events);
    for k in 1..=num_events as u64 {
        let Pending { t, node } = heap.pop().expect("one pending arrival per node");
        events.push(Event { k, t, node });
        heap.push(Pending {
            t: t - rng::open_unit(&mut r).ln() / rates.rates()[node],
            node,
        });
    }
    EventTrace { events, seed }
}

/// `(1 − e^{−μt})/(μt)`, the expected value of `1/D(t)`-type terms when
/// iteration-indexed bounds are moved to real time.
pub fn realtime_factor(mu_total: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("real time must be positive (got {t})")));
    }
    if !(mu_total > 0.0) {
        return Err(Error::Domain(format!("aggregate rate must be positive (got {mu_total})")));
    }
    let x = mu_total * t;
    Ok(-(-x).exp_m1() / x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> NodeRates {
        NodeRates::new(vec![8.0, 1.0, 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn rates_summary() {
        let r = table1();
        assert_eq!(r.total(), 12.0);
        assert_eq!(r.xi(), 8.0);
        assert!(NodeRates::new(vec![1.0, 0.0]).is_err());
        assert!(NodeRates::new(vec![]).is_err());
    }

    #[test]
    fn single_node_trace() {
        let r = NodeRates::new(vec![1.0]).unwrap();
        let tr = sample_trace(&r, 100_000, 5);
        assert!(tr.events.iter().all(|e| e.node == 0));
        let mean = tr.events.last().unwrap().t / tr.len() as f64;
        let se = 1.0 / (tr.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn heterogeneous_fraction() {
        let tr = sample_trace(&table1(), 100_000, 17);
        let frac = tr.node_counts(5)[0] as f64 / 1e5;
        let p = 8.0 / 12.0;
        assert!((frac - p).abs() < 4.0 * (p * (1.0 - p) / 1e5).sqrt(), "{frac}");
    }

    #[test]
    fn traces_are_deterministic_and_ordered() {
        let a = sample_trace(&table1(), 1000, 3);
        assert_eq!(a, sample_trace(&table1(), 1000, 3));
        assert_ne!(a, sample_trace(&table1(), 1000, 4));
        assert!(a.events.windows(2).all(|w| w[0].t < w[1].t && w[1].k == w[0].k + 1));
        assert_eq!(a.events[0].k, 1);
        assert!(a.events[0].t > 0.0);
    }

    #[test]
    fn horizon_trace_is_prefix() {
        let full = sample_trace(&table1(), 5000, 9);
        let cut = sample_trace_until(&table1(), 50.0, 9).unwrap();
        assert_eq!(&full.events[..cut.len()], &cut.events[..]);
        assert!(cut.events.last().unwrap().t <= 50.0);
        assert!(full.events[cut.len()].t > 50.0);
        assert!(sample_trace_until(&table1(), 0.0, 9).is_err());
    }

    #[test]
    fn merged_two_equal_nodes() {
        let r = NodeRates::new(vec![2.0, 2.0]).unwrap();
        let tr = sample_trace_merged(&r, 100_000, 1);
        let frac = tr.node_counts(2)[0] as f64 / 1e5;
        assert!((frac - 0.5).abs() < 4.0 * (0.25f64 / 1e5).sqrt());
        assert!(tr.events.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn realtime_factor_values() {
        assert!((realtime_factor(1.0, 1e-12).unwrap() - 1.0).abs() < 1e-9);
        assert!((realtime_factor(1.0, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((realtime_factor(2.0, 50.0).unwrap() - 0.01 * (1.0 - (-100.0f64).exp())).abs() < 1e-15);
        assert!(realtime_factor(1.0, 0.0).is_err());
        assert!(realtime_factor(1.0, -1.0).is_err());
    }

    #[test]
    fn realtime_factor_strictly_decreasing() {
        let grid: Vec<f64> = (0..100)
            .map(|i| 10f64.powf(-6.0 + 9.0 * i as f64 / 99.0))
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&x| realtime_factor(1.0, x).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(vals.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn trace_csv_header() {
        let tr = sample_trace(&table1(), 2, 0);
        let csv = tr.to_csv();
        assert!(csv.starts_with("k,t,node\n1,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
