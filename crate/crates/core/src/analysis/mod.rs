//! Batch experiments over the engine and an exact oracle for tiny graphs.

pub mod emit;
pub mod oracle;
pub mod stats;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deviations::DeviationSpec;
use crate::engine::{
    run, run_observed, Action, OutputValue, Payload, Protocol, RoundObserver, RunConfig, RunRecord,
};
use crate::error::{Error, Result};
use crate::graph::{FamilyKind, Graph, GraphFamily, NodeId};
use crate::rank::RankBits;

pub use oracle::{exact_small_oracle, OracleResult};
pub use stats::Spread;

/// Runs seeds `seed_base .. seed_base + trials` in parallel; records come back
/// in seed order.
pub fn run_batch(config: &RunConfig, trials: u64, seed_base: u64) -> Result<Vec<RunRecord>> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    config.validate()?;
    (0..trials)
        .into_par_iter()
        .map(|k| run(&config.with_seed(seed_base.wrapping_add(k))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: u64,
    pub terminated_fraction: f64,
    pub iterations: Spread,
    /// Per node, the fraction of runs in which it output 1.
    pub inclusion_frequency: Vec<f64>,
    pub bot_count: u64,
    pub neg_inf_count: u64,
    /// Per node, mean over the runs where its utility is finite.
    pub mean_finite_utility: Vec<f64>,
    pub cheat_flag_count: u64,
    /// Runs that terminated with a maximal independent set and no ⊥.
    pub mis_valid: u64,
}

impl TrialSummary {
    pub fn from_records(g: &Graph, records: &[RunRecord]) -> Self {
        let n = g.n();
        let t = records.len() as f64;
        let iters: Vec<f64> = records.iter().map(|r| r.iterations_used as f64).collect();
        let mut ones = vec![0u64; n];
        let mut finite: Vec<Vec<f64>> = vec![Vec::new(); n];
        for r in records {
            for i in r.ones() {
                ones[i.idx()] += 1;
            }
            for (i, u) in r.utilities.iter().enumerate() {
                if let Some(x) = u.finite() {
                    finite[i].push(x);
                }
            }
        }
        TrialSummary {
            trials: records.len() as u64,
            terminated_fraction: records.iter().filter(|r| r.terminated).count() as f64 / t,
            iterations: Spread::of(&iters),
            inclusion_frequency: ones.iter().map(|&c| c as f64 / t).collect(),
            bot_count: records.iter().map(|r| r.bot_count() as u64).sum(),
            neg_inf_count: records.iter().map(|r| r.neg_inf_count() as u64).sum(),
            mean_finite_utility: finite.iter().map(|xs| stats::mean(xs)).collect(),
            cheat_flag_count: records
                .iter()
                .map(|r| r.cheat_flags.iter().filter(|&&f| f).count() as u64)
                .sum(),
            mis_valid: records.iter().filter(|r| r.is_valid_mis(g)).count() as u64,
        }
    }
}

pub fn run_trials(config: &RunConfig, trials: u64, seed_base: u64) -> Result<TrialSummary> {
    let records = run_batch(config, trials, seed_base)?;
    Ok(TrialSummary::from_records(&config.graph, &records))
}

/// Deviator utility with and without one deviation, on identical seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub deviation: DeviationSpec,
    pub trials: u64,
    pub honest_mean: f64,
    /// Mean over deviant runs with finite utility.
    pub deviant_mean: f64,
    /// Standard error of the paired difference (runs where both are finite).
    pub std_err: f64,
    pub neg_inf_runs: u64,
    pub honest_neg_inf_runs: u64,
    pub detected_runs: u64,
    pub fired_runs: u64,
    /// Runs where the deviation fired and the deviator still got utility > 0.
    pub fired_positive_runs: u64,
}

impl PairedComparison {
    /// Deviant runs containing -inf rank strictly below an honest baseline
    /// without any; otherwise the deviant mean must not exceed the honest mean
    /// by more than two standard errors.
    pub fn is_not_profitable(&self) -> bool {
        if self.neg_inf_runs > 0 && self.honest_neg_inf_runs == 0 {
            return true;
        }
        self.deviant_mean <= self.honest_mean + 2.0 * self.std_err
    }
}

pub fn paired_deviation_test(
    config: &RunConfig,
    spec: &DeviationSpec,
    trials: u64,
    seed_base: u64,
) -> Result<PairedComparison> {
    if !config.deviations.is_empty() {
        return Err(Error::Config(
            "baseline config must not contain deviations".into(),
        ));
    }
    let mut deviant = config.clone();
    deviant.deviations = vec![spec.clone()];
    deviant.validate()?;
    let i = spec.node.idx();
    let honest_runs = run_batch(config, trials, seed_base)?;
    let deviant_runs = run_batch(&deviant, trials, seed_base)?;

    let honest_u: Vec<_> = honest_runs.iter().map(|r| r.utilities[i]).collect();
    let deviant_u: Vec<_> = deviant_runs.iter().map(|r| r.utilities[i]).collect();
    let finite =
        |us: &[crate::UtilityValue]| us.iter().filter_map(|u| u.finite()).collect::<Vec<_>>();
    let diffs: Vec<f64> = honest_u
        .iter()
        .zip(&deviant_u)
        .filter_map(|(h, d)| Some(d.finite()? - h.finite()?))
        .collect();
    let report = |r: &RunRecord| r.deviations.first().cloned();
    let fired = |r: &RunRecord| report(r).is_some_and(|d| d.fired_rounds > 0);
    Ok(PairedComparison {
        deviation: spec.clone(),
        trials,
        honest_mean: stats::mean(&finite(&honest_u)),
        deviant_mean: stats::mean(&finite(&deviant_u)),
        std_err: stats::std_err(&diffs),
        neg_inf_runs: deviant_u.iter().filter(|u| u.is_neg_inf()).count() as u64,
        honest_neg_inf_runs: honest_u.iter().filter(|u| u.is_neg_inf()).count() as u64,
        detected_runs: deviant_runs
            .iter()
            .filter(|r| report(r).is_some_and(|d| d.detected))
            .count() as u64,
        fired_runs: deviant_runs.iter().filter(|r| fired(r)).count() as u64,
        fired_positive_runs: deviant_runs
            .iter()
            .filter(|r| fired(r) && r.utilities[i] > crate::UtilityValue::Finite(0.0))
            .count() as u64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub trials: u64,
    pub terminated_fraction: f64,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    pub p95_iterations: f64,
    pub max_iterations: f64,
}

/// Iteration counts for each size in `ns`. Random families are sampled once
/// per size from `seed_base`, and every trial runs on that graph.
pub fn termination_curve(
    kind: &FamilyKind,
    ns: &[usize],
    protocol: Protocol,
    trials: u64,
    seed_base: u64,
    rank_bits_c: f64,
) -> Result<Vec<CurvePoint>> {
    ns.iter()
        .map(|&n| {
            let g = GraphFamily::new(*kind, n).build(seed_base)?;
            let mut config = RunConfig::new(Arc::new(g), protocol);
            config.rank_bits = Some(crate::engine::rank_bits_for(n, rank_bits_c));
            let s = run_trials(&config, trials, seed_base)?;
            Ok(CurvePoint {
                n,
                trials,
                terminated_fraction: s.terminated_fraction,
                mean_iterations: s.iterations.mean,
                median_iterations: s.iterations.median,
                p95_iterations: s.iterations.p95,
                max_iterations: s.iterations.max,
            })
        })
        .collect()
}

/// Node-iterations in which a node and all of its neighbours were undecided
/// at the start of the iteration, bucketed by degree, with how many of those
/// ended with the node joining.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinTally {
    pub eligible: Vec<u64>,
    pub joined: Vec<u64>,
}

impl JoinTally {
    pub fn add(&mut self, g: &Graph, rec: &RunRecord) {
        let period = rec.protocol.rounds_per_iteration();
        let len = g.max_degree() + 1;
        if self.eligible.len() < len {
            self.eligible.resize(len, 0);
            self.joined.resize(len, 0);
        }
        let undecided_at =
            |i: NodeId, start: u64| rec.output_rounds[i.idx()].is_none_or(|r| r >= start);
        for t in 1..=rec.iterations_used {
            let start = period * (t - 1);
            for i in g.nodes() {
                if !undecided_at(i, start)
                    || !g.neighbors(i).iter().all(|&j| undecided_at(j, start))
                {
                    continue;
                }
                let d = g.degree(i);
                self.eligible[d] += 1;
                let joined_now = rec.outputs[i.idx()] == Some(OutputValue::One)
                    && rec.output_rounds[i.idx()].is_some_and(|r| rec.iteration_of(r) == t);
                if joined_now {
                    self.joined[d] += 1;
                }
            }
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        let len = self.eligible.len().max(other.eligible.len());
        self.eligible.resize(len, 0);
        self.joined.resize(len, 0);
        for d in 0..other.eligible.len() {
            self.eligible[d] += other.eligible[d];
            self.joined[d] += other.joined[d];
        }
        self
    }
}

/// Counts pairs of nodes that end up with equal ranks in the same iteration
/// of the rank protocol, rebuilding each rank from the self-randomness and the
/// forwarded share actually broadcast.
#[derive(Clone, Debug, Default)]
pub struct RankTieObserver {
    self_rand: Vec<(NodeId, RankBits)>,
    forwards: Vec<(NodeId, RankBits)>,
    /// Iterations in which at least one rank was formed.
    pub iterations: u64,
    pub tied_pairs: u64,
    pub tied_iterations: u64,
    /// Nodes that formed a rank, summed over iterations.
    pub participants: u64,
}

impl RoundObserver for RankTieObserver {
    fn on_action(&mut self, round: u64, node: NodeId, action: &Action) {
        for m in &action.outbound {
            match (round % 5, &m.payload) {
                (1, Payload::SelfRand(b)) => self.self_rand.push((node, *b)),
                (2, Payload::ForwardedPairRand { bits, .. }) => self.forwards.push((node, *bits)),
                _ => {}
            }
        }
    }

    fn on_round_end(&mut self, round: u64, _outputs: &[Option<OutputValue>]) {
        if round % 5 != 2 {
            return;
        }
        let mut ranks: Vec<u64> = self
            .forwards
            .iter()
            .filter_map(|(i, f)| {
                let s = self.self_rand.iter().find(|(k, _)| k == i)?.1;
                (s.len() == f.len()).then(|| s.xor(*f).value())
            })
            .collect();
        self.self_rand.clear();
        self.forwards.clear();
        if ranks.is_empty() {
            return;
        }
        ranks.sort_unstable();
        let mut ties = 0u64;
        for group in ranks.chunk_by(|a, b| a == b) {
            let k = group.len() as u64;
            ties += k * (k - 1) / 2;
        }
        self.iterations += 1;
        self.participants += ranks.len() as u64;
        self.tied_pairs += ties;
        self.tied_iterations += u64::from(ties > 0);
    }
}

/// Runs one rank-protocol run with a [`RankTieObserver`] attached.
pub fn run_with_tie_count(config: &RunConfig) -> Result<(RunRecord, RankTieObserver)> {
    if config.protocol != Protocol::Rank {
        return Err(Error::Config(
            "rank ties only exist in the rank protocol".into(),
        ));
    }
    let mut obs = RankTieObserver::default();
    let rec = run_observed(config, &mut obs)?;
    Ok((rec, obs))
}
