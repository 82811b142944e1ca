//! Parameter estimation for the emission model.
//!
//! Unsupervised training runs stepwise EM over batches of observed Latin
//! sentences, each marginalized through the lattice `T ∘ S ∘ A(l)`.
//! Supervised training runs batch EM on `A(o) ∘ T ∘ S ∘ A(l)`.
//!
//! Three E-step routes compute the same counts. [`estep_expectation`] runs
//! a single forward pass over the composed lattice in the expectation
//! semiring, [`estep_forward_backward`] uses log-semiring forward and
//! backward distances over that lattice, and [`crate::cascade`] runs
//! forward–backward over the lattice without composing it. The trainers use
//! the last unless [`EStepMethod::Expectation`] is configured.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automata::{
    backward_distance, chain_acceptor, compose, shortest_distance, Wfst, EPSILON,
};
use crate::cascade::{self, Channel, LmTable, SourceChain};
use crate::channel::{
    build_emission_fst, build_pruned_emission_fst, init_params, EmissionParams, OpTable, PriorSpec,
    FROZEN_DELETION,
};
use crate::error::{Error, Result};
use crate::ngram::{to_wfsa, NgramModel};
use crate::semiring::{arc_weight_with_basis, ExpectationWeight, LogWeight, Semiring, SparseVec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EStepMethod {
    /// Forward–backward over the implicit lattice.
    #[default]
    ForwardBackward,
    /// Expectation semiring over the composed lattice.
    Expectation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub beta: f64,
    pub batches_per_stage: usize,
    /// LM order of each curriculum stage.
    pub orders: Vec<usize>,
    /// Emission prune threshold (negative log) in the first and last stage.
    pub prune_start: f64,
    pub prune_end: f64,
    /// Deletion probability while deletions are frozen in the first stage.
    pub frozen_deletion: f64,
    pub delay: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Relative size of the multiplicative noise on the initial parameters.
    pub init_noise: f64,
    pub supervised_iterations: usize,
    pub estep: EStepMethod,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            beta: 0.9,
            batches_per_stage: 100,
            orders: vec![2, 3, 4, 5, 6],
            prune_start: 5.0,
            prune_end: 4.5,
            frozen_deletion: FROZEN_DELETION,
            delay: 2,
            restarts: 1,
            seed: 0,
            init_noise: 0.1,
            supervised_iterations: 5,
            estep: EStepMethod::ForwardBackward,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.batches_per_stage == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if self.orders.is_empty() {
            return bad("order schedule is empty");
        }
        if let Some(o) = self.orders.iter().find(|o| !(2..=6).contains(*o)) {
            return Err(Error::Config(format!("order {o} is outside 2..=6")));
        }
        if self.delay == 0 {
            return bad("delay limit must be at least 1");
        }
        if self.restarts == 0 {
            return bad("at least one restart is needed");
        }
        if !(self.frozen_deletion > 0.0 && self.frozen_deletion < 1.0) {
            return bad("frozen deletion value must lie in (0, 1)");
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return bad("init noise must be nonnegative");
        }
        if !(self.prune_start.is_finite() && self.prune_end.is_finite()) {
            return bad("prune thresholds must be finite");
        }
        Ok(())
    }

    /// Emission prune threshold in `stage`, stepped linearly from
    /// `prune_start` to `prune_end`.
    pub fn prune_threshold(&self, stage: usize) -> f64 {
        let n = self.orders.len();
        if n < 2 {
            return self.prune_start;
        }
        let t = stage.min(n - 1) as f64 / (n - 1) as f64;
        self.prune_start + t * (self.prune_end - self.prune_start)
    }

    pub fn stage_of_batch(&self, batch: usize) -> usize {
        (batch / self.batches_per_stage).min(self.orders.len() - 1)
    }
}

/// Stepsize of stepwise EM after `k` updates: `(k + 2)^-β`.
pub fn step_size(k: usize, beta: f64) -> f64 {
    (k as f64 + 2.0).powf(-beta)
}

/// `μ ← (1 − η_k) μ + η_k s_k`.
pub fn stepwise_update(mu: &[f64], s: &[f64], k: usize, beta: f64) -> Vec<f64> {
    let eta = step_size(k, beta);
    mu.iter()
        .zip(s)
        .map(|(m, s)| (1.0 - eta) * m + eta * s)
        .collect()
}

/// Posterior-mean M-step: `θ = (μ + α) / Σ_family (μ + α)`. Families without
/// any mass keep `prev`'s values; the stage switches of `prev` carry over.
pub fn mstep(mu: &[f64], alpha: &[f64], prev: &EmissionParams) -> EmissionParams {
    let table = prev.table();
    let mut probs = prev.probs().to_vec();
    for range in table.families() {
        let (lo, hi) = (range.start as usize, range.end as usize);
        let total: f64 = (lo..hi).map(|i| mu[i] + alpha[i]).sum();
        if total > 0.0 {
            for i in lo..hi {
                probs[i] = (mu[i] + alpha[i]) / total;
            }
        }
    }
    let mut next = prev.clone();
    next.set_probs(probs);
    next
}

/// Marginal log-likelihood of one lattice and the expected count of every
/// edit operation under its posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceStats {
    pub loglik: f64,
    pub counts: Vec<f64>,
}

/// `T ∘ (S ∘ A(l))`.
pub fn observation_lattice<W: Semiring>(
    lm: &Wfst<W>,
    emission: &Wfst<W>,
    latin: &str,
) -> Result<Wfst<W>> {
    let observed = chain_acceptor(latin, emission.osyms())?;
    compose(lm, &compose(emission, &observed)?)
}

/// `(A(o) ∘ T) ∘ (S ∘ A(l))`.
pub fn pair_lattice<W: Semiring>(
    lm: &Wfst<W>,
    emission: &Wfst<W>,
    original: &str,
    latin: &str,
) -> Result<Wfst<W>> {
    let source = chain_acceptor(original, lm.isyms())?;
    let observed = chain_acceptor(latin, emission.osyms())?;
    compose(&compose(&source, lm)?, &compose(emission, &observed)?)
}

/// The no-insertion outcome's id when the lattice charges it, which it does
/// on every arc consuming a source character and on every final weight.
fn charged_no_insert(params: &EmissionParams) -> Option<u32> {
    params
        .insertions_enabled()
        .then(|| params.table().no_insert())
        .flatten()
}

/// E-step over a lattice in the expectation semiring. Every arc's weight is
/// augmented with the basis vector of the edit operation it carries, plus
/// that of the no-insertion outcome where it is charged.
pub fn estep_expectation(
    lattice: &Wfst<LogWeight>,
    params: &EmissionParams,
) -> Result<SentenceStats> {
    let table = params.table();
    let stop = charged_no_insert(params);
    let lift = |w: f64, ops: &[u32]| {
        ExpectationWeight::from_parts(
            w,
            &SparseVec::from_pairs(ops.iter().map(|&o| (o, (-w).exp()))),
        )
    };
    let lifted = lattice.map_arc_weights(
        |arc| match (table.op_for_labels(arc.ilabel, arc.olabel), stop) {
            (Some(id), Some(s)) if arc.ilabel != EPSILON => lift(arc.weight.0, &[id, s]),
            (Some(id), _) => arc_weight_with_basis(id, arc.weight.0),
            (None, _) => ExpectationWeight::from_neg_log(arc.weight.0),
        },
        |w| match stop {
            Some(s) => lift(w.0, &[s]),
            None => ExpectationWeight::from_neg_log(w.0),
        },
    );
    let total = shortest_distance(&lifted)?.total;
    if total.is_zero() {
        return Err(Error::NoPath);
    }
    let mut counts = vec![0.0; table.len()];
    for (id, c) in total.expected_counts().iter() {
        counts[id as usize] = c;
    }
    Ok(SentenceStats {
        loglik: -total.neg_log(),
        counts,
    })
}

/// E-step over a lattice from forward and backward log-semiring distances:
/// each arc's posterior is `α(q) · w · β(r) / Z`.
pub fn estep_forward_backward(
    lattice: &Wfst<LogWeight>,
    params: &EmissionParams,
) -> Result<SentenceStats> {
    let table = params.table();
    let stop = charged_no_insert(params);
    let forward = shortest_distance(lattice)?;
    let z = forward.total.0;
    if z == f64::INFINITY {
        return Err(Error::NoPath);
    }
    let backward = backward_distance(lattice)?;
    let mut counts = vec![0.0; table.len()];
    for q in lattice.states() {
        let a = forward.forward[q].0;
        if a == f64::INFINITY {
            continue;
        }
        for arc in lattice.arcs(q) {
            if let Some(id) = table.op_for_labels(arc.ilabel, arc.olabel) {
                let cost = a + arc.weight.0 + backward[arc.nextstate].0 - z;
                if cost < f64::INFINITY {
                    let post = (-cost).exp();
                    counts[id as usize] += post;
                    if let Some(s) = stop.filter(|_| arc.ilabel != EPSILON) {
                        counts[s as usize] += post;
                    }
                }
            }
        }
    }
    if let Some(s) = stop {
        // Exactly one final weight is taken on every path.
        counts[s as usize] += 1.0;
    }
    Ok(SentenceStats { loglik: -z, counts })
}

/// Arcs of the emission transducer restricted to `keep`, as built for
/// logging without building it.
fn emission_arc_count(params: &EmissionParams, delay: usize, keep: &[bool]) -> usize {
    let n = 2 * delay + 1;
    params
        .table()
        .ops()
        .iter()
        .enumerate()
        .filter(|&(id, _)| keep[id] && params.prob(id as u32) > 0.0)
        .map(|(_, op)| match op {
            crate::channel::EditOp::Sub(..) => n,
            crate::channel::EditOp::Del(_) => n - 1,
            crate::channel::EditOp::Ins(_) if params.insertions_enabled() => n - 1,
            _ => 0,
        })
        .sum()
}

/// One line of a training run log.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrainEvent {
    Stage {
        restart: usize,
        stage: usize,
        order: usize,
        prune_threshold: f64,
        insertions: bool,
        frozen_deletions: bool,
    },
    Batch {
        restart: usize,
        batch: usize,
        stage: usize,
        order: usize,
        sentences: usize,
        skipped: usize,
        loglik: f64,
        emission_arcs: usize,
    },
    Skip {
        restart: usize,
        batch: usize,
        sentence: usize,
        reason: String,
    },
    Iteration {
        iteration: usize,
        pairs: usize,
        skipped: usize,
        loglik: f64,
        objective: f64,
    },
    Excluded {
        pair: usize,
        reason: String,
    },
    Restart {
        restart: usize,
        seed: u64,
        final_stage_loglik: f64,
        final_stage_skipped: usize,
    },
    Selected {
        restart: usize,
    },
}

/// Result of one unsupervised run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub params: EmissionParams,
    pub seed: u64,
    /// Total log-likelihood per batch.
    pub trace: Vec<f64>,
    /// Mean per-sentence log-likelihood over the sentences of the final
    /// stage that had a path.
    pub final_stage_loglik: f64,
    /// Sentences of the final stage without any path.
    pub final_stage_skipped: usize,
}

/// Stepwise EM with the order and pruning curriculum.
///
/// Sentences are visited once, shortest first, in batches. The first stage
/// runs without insertions and with deletions frozen; from the second stage
/// on both are enabled and deletions restart from their initial values.
/// `lms` must hold a model for every order in the schedule. Sentences with
/// an empty lattice are skipped; a batch with none left makes no update.
#[allow(clippy::too_many_arguments)]
pub fn train_unsupervised_run<S: AsRef<str> + Sync>(
    latin: &[S],
    lms: &[NgramModel],
    table: std::sync::Arc<OpTable>,
    prior: &PriorSpec,
    config: &TrainConfig,
    restart: usize,
    seed: u64,
    log: &mut dyn FnMut(&TrainEvent),
) -> Result<RunOutcome> {
    config.validate()?;
    if latin.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lm_for = |order: usize| {
        lms.iter()
            .find(|m| m.order() == order)
            .ok_or_else(|| Error::Config(format!("no language model of order {order}")))
    };
    for &o in &config.orders {
        lm_for(o)?;
    }

    let mut order: Vec<usize> = (0..latin.len()).collect();
    order.sort_by_key(|&i| latin[i].as_ref().chars().count());

    let alpha = prior.alpha(&table);
    let initial = init_params(table.clone(), seed, config.init_noise);
    let mut params = initial.clone();
    let mut mu = vec![0.0; table.len()];
    let mut trace = Vec::new();
    let mut stage = usize::MAX;
    let mut lm = Wfst::<LogWeight>::new(
        table.source_symbols().clone(),
        table.source_symbols().clone(),
    );
    let mut lm_table = None;
    let mut final_stage = (0.0, 0usize, 0usize);
    let mut updates = 0;

    for (batch, idx) in order.chunks(config.batch_size).enumerate() {
        let s = config.stage_of_batch(batch);
        if s != stage {
            let first = s == 0;
            if !first && params.frozen_deletion().is_some() {
                params = thaw_deletions(&params, &initial);
            }
            params = params.with_stage(!first, first.then_some(config.frozen_deletion));
            let model = lm_for(config.orders[s])?;
            match config.estep {
                EStepMethod::ForwardBackward => {
                    lm_table = Some(LmTable::new(model, table.source()))
                }
                EStepMethod::Expectation => lm = to_wfsa(model, table.source_symbols())?,
            }
            stage = s;
            final_stage = (0.0, 0, 0);
            log(&TrainEvent::Stage {
                restart,
                stage: s,
                order: config.orders[s],
                prune_threshold: config.prune_threshold(s),
                insertions: params.insertions_enabled(),
                frozen_deletions: params.frozen_deletion().is_some(),
            });
        }
        let keep = params.surviving_ops(config.prune_threshold(s));
        let emission_arcs = emission_arc_count(&params, config.delay, &keep);
        let results: Vec<Result<SentenceStats>> = match &lm_table {
            Some(m) => {
                let ch = Channel::new(&params, config.delay, Some(&keep));
                idx.par_iter()
                    .map(|&i| cascade::forward_backward(m, &ch, table.len(), latin[i].as_ref()))
                    .collect()
            }
            None => {
                let emission = build_pruned_emission_fst::<LogWeight>(
                    &params,
                    config.delay,
                    config.prune_threshold(s),
                );
                idx.par_iter()
                    .map(|&i| {
                        let lattice = observation_lattice(&lm, &emission, latin[i].as_ref())?;
                        estep_expectation(&lattice, &params)
                    })
                    .collect()
            }
        };

        let mut stats = vec![0.0; table.len()];
        let (mut loglik, mut used, mut skipped) = (0.0, 0, 0);
        for (&i, r) in idx.iter().zip(results) {
            match r {
                Ok(st) => {
                    loglik += st.loglik;
                    used += 1;
                    for (acc, c) in stats.iter_mut().zip(&st.counts) {
                        *acc += c;
                    }
                }
                Err(e @ (Error::NoPath | Error::UnknownSymbol { .. })) => {
                    skipped += 1;
                    log(&TrainEvent::Skip {
                        restart,
                        batch,
                        sentence: i,
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        final_stage.2 += skipped;
        if used == 0 {
            log(&TrainEvent::Batch {
                restart,
                batch,
                stage: s,
                order: config.orders[s],
                sentences: 0,
                skipped,
                loglik: 0.0,
                emission_arcs,
            });
            continue;
        }
        mu = stepwise_update(&mu, &stats, updates, config.beta);
        updates += 1;
        params = mstep(&mu, &alpha, &params);
        trace.push(loglik);
        final_stage.0 += loglik;
        final_stage.1 += used;
        log(&TrainEvent::Batch {
            restart,
            batch,
            stage: s,
            order: config.orders[s],
            sentences: used,
            skipped,
            loglik,
            emission_arcs,
        });
    }
    if updates == 0 {
        return Err(Error::Training(
            "no sentence had a path through its lattice".into(),
        ));
    }
    let final_stage_loglik = if final_stage.1 == 0 {
        f64::NEG_INFINITY
    } else {
        final_stage.0 / final_stage.1 as f64
    };
    log(&TrainEvent::Restart {
        restart,
        seed,
        final_stage_loglik,
        final_stage_skipped: final_stage.2,
    });
    Ok(RunOutcome {
        params,
        seed,
        trace,
        final_stage_loglik,
        final_stage_skipped: final_stage.2,
    })
}

/// Gives every deletion its initial probability back before the family is
/// renormalized, so that pruning does not keep them out for good.
fn thaw_deletions(params: &EmissionParams, initial: &EmissionParams) -> EmissionParams {
    let table = params.table();
    let probs = table
        .ops()
        .iter()
        .enumerate()
        .map(|(id, op)| match op {
            crate::channel::EditOp::Del(_) => initial.probs()[id],
            _ => params.probs()[id],
        })
        .collect();
    EmissionParams::from_probs(table.clone(), probs)
        .expect("probabilities come from valid parameters")
        .with_stage(params.insertions_enabled(), None)
}

/// Runs `config.restarts` unsupervised runs with seeds `seed, seed + 1, …`
/// and returns all of them together with the index of the selected one: the
/// fewest final-stage sentences without a path, then the highest final-stage
/// mean per-sentence log-likelihood.
pub fn train_unsupervised<S: AsRef<str> + Sync>(
    latin: &[S],
    lms: &[NgramModel],
    table: std::sync::Arc<OpTable>,
    prior: &PriorSpec,
    config: &TrainConfig,
    log: &mut dyn FnMut(&TrainEvent),
) -> Result<(Vec<RunOutcome>, usize)> {
    config.validate()?;
    let mut runs = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let seed = config.seed.wrapping_add(r as u64);
        runs.push(train_unsupervised_run(
            latin,
            lms,
            table.clone(),
            prior,
            config,
            r,
            seed,
            log,
        )?);
    }
    let best = runs
        .iter()
        .enumerate()
        .max_by(|a, b| {
            b.1.final_stage_skipped
                .cmp(&a.1.final_stage_skipped)
                .then(a.1.final_stage_loglik.total_cmp(&b.1.final_stage_loglik))
                .then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    log(&TrainEvent::Selected { restart: best });
    Ok((runs, best))
}

/// Result of supervised training.
#[derive(Clone, Debug)]
pub struct SupervisedOutcome {
    pub params: EmissionParams,
    /// Marginal log-likelihood before each M-step.
    pub loglik: Vec<f64>,
    /// `loglik + Σ α ln θ` before each M-step.
    pub objective: Vec<f64>,
    pub excluded: usize,
}

/// Prior term `Σ α ln θ` of the penalized objective.
pub fn prior_log_density(params: &EmissionParams, alpha: &[f64]) -> f64 {
    params
        .probs()
        .iter()
        .zip(alpha)
        .filter(|(_, &a)| a > 0.0)
        .map(|(&p, &a)| a * p.ln())
        .sum()
}

/// Batch EM on parallel `(original, latin)` pairs with insertions enabled.
/// Pairs whose lengths differ by more than the delay limit are excluded up
/// front.
pub fn train_supervised<S: AsRef<str> + Sync>(
    pairs: &[(S, S)],
    lm: &NgramModel,
    table: std::sync::Arc<OpTable>,
    prior: &PriorSpec,
    config: &TrainConfig,
    log: &mut dyn FnMut(&TrainEvent),
) -> Result<SupervisedOutcome> {
    config.validate()?;
    let mut kept = Vec::new();
    for (i, (o, l)) in pairs.iter().enumerate() {
        let (no, nl) = (o.as_ref().chars().count(), l.as_ref().chars().count());
        if no.abs_diff(nl) > config.delay {
            log(&TrainEvent::Excluded {
                pair: i,
                reason: format!(
                    "length gap {} exceeds delay {}",
                    no.abs_diff(nl),
                    config.delay
                ),
            });
        } else {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Training(
            "every pair exceeds the delay limit".to_string(),
        ));
    }
    let excluded = pairs.len() - kept.len();
    let alpha = prior.alpha(&table);
    let t = match config.estep {
        EStepMethod::Expectation => Some(to_wfsa(lm, table.source_symbols())?),
        EStepMethod::ForwardBackward => None,
    };
    let mut params = init_params(table.clone(), config.seed, config.init_noise);
    let mut loglik = Vec::new();
    let mut objective = Vec::new();
    for iteration in 0..config.supervised_iterations {
        let results: Vec<Result<SentenceStats>> = match &t {
            None => {
                let ch = Channel::new(&params, config.delay, None);
                kept.par_iter()
                    .map(|&i| {
                        let (o, l) = (pairs[i].0.as_ref(), pairs[i].1.as_ref());
                        let chain = SourceChain::new(lm, table.source(), o)?;
                        cascade::forward_backward(&chain, &ch, table.len(), l)
                    })
                    .collect()
            }
            Some(t) => {
                let s = build_emission_fst::<LogWeight>(&params, config.delay);
                kept.par_iter()
                    .map(|&i| {
                        let (o, l) = (pairs[i].0.as_ref(), pairs[i].1.as_ref());
                        estep_expectation(&pair_lattice(t, &s, o, l)?, &params)
                    })
                    .collect()
            }
        };
        let mut stats = vec![0.0; table.len()];
        let (mut ll, mut used, mut skipped) = (0.0, 0, 0);
        for (&i, r) in kept.iter().zip(results) {
            match r {
                Ok(st) => {
                    ll += st.loglik;
                    used += 1;
                    for (acc, c) in stats.iter_mut().zip(&st.counts) {
                        *acc += c;
                    }
                }
                Err(e @ (Error::NoPath | Error::UnknownSymbol { .. })) => {
                    skipped += 1;
                    if iteration == 0 {
                        log(&TrainEvent::Excluded {
                            pair: i,
                            reason: e.to_string(),
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        if used == 0 {
            return Err(Error::Training("no pair has a lattice path".to_string()));
        }
        let obj = ll + prior_log_density(&params, &alpha);
        log(&TrainEvent::Iteration {
            iteration,
            pairs: used,
            skipped,
            loglik: ll,
            objective: obj,
        });
        loglik.push(ll);
        objective.push(obj);
        params = mstep(&stats, &alpha, &params);
    }
    Ok(SupervisedOutcome {
        params,
        loglik,
        objective,
        excluded,
    })
}
