use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{ConceptGraph, ConceptKind, HierarchyError, NewConcept};
use super::queue::{EnqueueOutcome, SchedulerQueue, ThreadTicket};
use crate::actuator::{self, ActuatorError, ActuatorParams, CostModel};
use crate::ids::{millis_to_secs, ConceptId, Millis, TemplateId};
use crate::learning::{self, LearnError, LearnParams};
use crate::reward::{self, GlobalReward, PartitionStats, RewardError, RewardParams};
use crate::scalar::Scalar;
use crate::vm::{self, Codelet, CodeletGenerator, ExecOutcome, GenError, GenParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("engine parameter `{0}` out of range")]
    BadParam(&'static str),
    #[error("unknown sensor channel `{0}`")]
    UnknownChannel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineParams<F> {
    pub queue_capacity: usize,
    /// Ticket lifetime after creation.
    pub ttl_ms: Millis,
    /// Steps granted to every new ticket before any reward bonus.
    pub base_resources: u32,
    pub max_priority: u32,
    /// Age before a concept may be pruned.
    pub grace_ms: Millis,
    /// Executions per second below which a concept counts as rarely used.
    pub usage_threshold: F,
    /// Concepts whose best action value is below this are pruned.
    pub value_threshold: F,
    /// How recent the data in every input slot must be to start a thread.
    pub coexist_ms: Millis,
    /// VM steps available per millisecond of simulated time.
    pub steps_per_ms: u64,
    /// Sliding window for partition statistics; `None` is cumulative.
    pub stats_window: Option<usize>,
    /// Parallel VM workers; 1 is the deterministic single-worker mode.
    pub workers: usize,
    pub seed: u64,
    pub reward: RewardParams<F>,
    pub learn: LearnParams<F>,
    pub actuator: ActuatorParams<F>,
    /// Random codelet source; `None` disables program generation.
    pub generation: Option<GenParams>,
    /// Cap on regular concepts created by generation.
    pub max_regular: usize,
}

impl<F: Scalar> Default for EngineParams<F> {
    fn default() -> Self {
        EngineParams {
            queue_capacity: 10_000,
            ttl_ms: 500,
            base_resources: 200,
            max_priority: 100,
            grace_ms: 10_000,
            usage_threshold: F::lit(0.1),
            value_threshold: F::lit(0.01),
            coexist_ms: 50,
            steps_per_ms: 20_000,
            stats_window: None,
            workers: 1,
            seed: 0,
            reward: RewardParams::default(),
            learn: LearnParams::default(),
            actuator: ActuatorParams::default(),
            generation: None,
            max_regular: 200,
        }
    }
}

impl<F: Scalar> EngineParams<F> {
    pub fn check(&self) -> Result<(), EngineError> {
        self.reward.check()?;
        self.learn.check()?;
        self.actuator.check()?;
        if let Some(g) = &self.generation {
            g.check()?;
        }
        let checks: [(bool, &'static str); 6] = [
            (self.queue_capacity > 0, "queue_capacity"),
            (self.ttl_ms > 0, "ttl_ms"),
            (self.max_priority > 0, "max_priority"),
            (self.steps_per_ms > 0, "steps_per_ms"),
            (self.workers > 0, "workers"),
            (self.usage_threshold >= F::zero(), "usage_threshold"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Err(EngineError::BadParam(name)),
            None => Ok(()),
        }
    }
}

/// Latest data delivered to one input slot.
#[derive(Debug, Clone)]
struct SlotData {
    data: Vec<i64>,
    source: ConceptId,
    at: Millis,
    resources: u32,
    priority: u32,
}

/// Physical command for the world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActuationCommand {
    pub at: Millis,
    pub template: TemplateId,
    pub copy: ConceptId,
    pub inputs: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActuationEventKind {
    Request,
    Update,
    Removed,
    Created,
}

/// One actuation-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationEvent<F> {
    pub at: Millis,
    pub kind: ActuationEventKind,
    pub template: TemplateId,
    pub copy: ConceptId,
    pub inputs: Vec<Vec<i64>>,
    pub cost: F,
    pub resources: F,
    pub activated: bool,
    pub value: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport<F> {
    pub concept: ConceptId,
    pub outcome: ExecOutcome,
    pub budget: u32,
    /// Immediate reward `-p log2 p` on a match.
    pub reward: Option<F>,
    pub information: Option<F>,
    /// Extra steps awarded for the match.
    pub award: u32,
    pub spawned: usize,
    pub expired_dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineCounters {
    pub executed: u64,
    pub matched: u64,
    pub steps_consumed: u64,
    pub steps_granted: u64,
    pub expired_dropped: u64,
    pub evicted: u64,
    pub actuator_requests: u64,
    pub activations: u64,
    pub resources_spent: u64,
    pub resources_refunded: u64,
    pub codelets_generated: u64,
    pub codelets_accepted: u64,
}

/// The concept hierarchy together with its scheduler, learning state and
/// the global reward.
#[derive(Debug, Clone)]
pub struct Engine<F> {
    params: EngineParams<F>,
    graph: ConceptGraph<F>,
    queue: SchedulerQueue,
    reward: GlobalReward<F>,
    rng: ChaCha8Rng,
    generator: Option<CodeletGenerator>,
    buffers: BTreeMap<ConceptId, Vec<Option<SlotData>>>,
    live: usize,
    outbox: Vec<ActuationCommand>,
    log: Vec<ActuationEvent<F>>,
    copies_created: BTreeMap<TemplateId, Vec<Millis>>,
    counters: EngineCounters,
    clock: Millis,
}

impl<F: Scalar> Engine<F> {
    pub fn new(params: EngineParams<F>) -> Result<Self, EngineError> {
        params.check()?;
        let graph = ConceptGraph::new(params.learn.q0, params.actuator.a0);
        let reward = GlobalReward::new(params.reward.rho)?;
        Self::assemble(params, graph, reward, 0)
    }

    pub(crate) fn assemble(
        params: EngineParams<F>,
        graph: ConceptGraph<F>,
        reward: GlobalReward<F>,
        clock: Millis,
    ) -> Result<Self, EngineError> {
        params.check()?;
        let generator = params
            .generation
            .clone()
            .map(CodeletGenerator::new)
            .transpose()?;
        let live = graph
            .concepts()
            .filter_map(|c| c.actuator())
            .map(|a| a.pending().len())
            .sum();
        Ok(Engine {
            queue: SchedulerQueue::new(params.queue_capacity),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            generator,
            buffers: BTreeMap::new(),
            live,
            outbox: Vec::new(),
            log: Vec::new(),
            copies_created: BTreeMap::new(),
            counters: EngineCounters::default(),
            params,
            graph,
            reward,
            clock,
        })
    }

    pub fn params(&self) -> &EngineParams<F> {
        &self.params
    }

    pub fn graph(&self) -> &ConceptGraph<F> {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut ConceptGraph<F> {
        &mut self.graph
    }

    pub fn queue(&self) -> &SchedulerQueue {
        &self.queue
    }

    pub fn counters(&self) -> &EngineCounters {
        &self.counters
    }

    pub fn global_reward(&self) -> &GlobalReward<F> {
        &self.reward
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    /// Pending activations not yet value-updated, across all copies.
    pub fn live_activations(&self) -> usize {
        self.live
    }

    /// Creation times of copies per template.
    pub fn copies_created(&self) -> &BTreeMap<TemplateId, Vec<Millis>> {
        &self.copies_created
    }

    fn advance(&mut self, now: Millis) {
        debug_assert!(now >= self.clock, "simulated time must not go backwards");
        self.clock = self.clock.max(now);
    }

    /// Global reward decayed to `now`.
    pub fn reward_at(&self, now: Millis) -> F {
        let t = millis_to_secs::<F>(now.max(self.clock));
        self.reward.value_at(t).unwrap_or_else(|_| self.reward.value())
    }

    fn priority_of(&self, q: F) -> u32 {
        let p = q.round().to_u32().unwrap_or(u32::MAX);
        p.clamp(1, self.params.max_priority)
    }

    pub fn add_sensor(&mut self, channel: &str, width: usize) -> ConceptId {
        let now = self.clock;
        self.graph.add_sensor(channel, width, now)
    }

    pub fn add_template(&mut self, name: &str, min_sizes: Vec<usize>, cost: CostModel<F>) -> TemplateId {
        self.graph.add_template(name, min_sizes, cost)
    }

    pub fn integrate(&mut self, new: NewConcept, links: &[ConceptId], now: Millis) -> Result<ConceptId, HierarchyError> {
        self.advance(now);
        let template = match &new {
            NewConcept::ActuatorCopy(t) => Some(*t),
            _ => None,
        };
        let id = self.graph.integrate(new, links, now)?;
        if let Some(t) = template {
            self.copies_created.entry(t).or_default().push(now);
            let value = self.graph.a0();
            self.log.push(ActuationEvent {
                at: now,
                kind: ActuationEventKind::Created,
                template: t,
                copy: id,
                inputs: vec![],
                cost: F::zero(),
                resources: F::zero(),
                activated: false,
                value,
            });
        }
        Ok(id)
    }

    pub fn enqueue(&mut self, ticket: ThreadTicket, now: Millis) -> EnqueueOutcome {
        self.advance(now);
        let out = self.queue.enqueue(ticket, now);
        if matches!(out, EnqueueOutcome::Evicted(_) | EnqueueOutcome::Rejected) {
            self.counters.evicted += 1;
        }
        out
    }

    /// Feed one sensor reading to every concept linked under the channel.
    pub fn sense(&mut self, channel: &str, data: &[i64], now: Millis) -> Result<(), EngineError> {
        self.advance(now);
        let sensor = self
            .graph
            .sensor(channel)
            .ok_or_else(|| EngineError::UnknownChannel(channel.to_string()))?;
        let c = self.graph.get_mut(sensor).expect("sensor just found");
        c.usage += 1;
        let actions = c.actions.clone();
        let base = self.params.base_resources;
        for a in actions {
            let priority = self.priority_of(a.q);
            self.deliver(sensor, a.target, a.slot, data.to_vec(), base, priority, now);
        }
        Ok(())
    }

    /// Store data in a slot; start a thread (or an actuator request) once
    /// every slot holds fresh data.
    #[allow(clippy::too_many_arguments)]
    fn deliver(
        &mut self,
        source: ConceptId,
        target: ConceptId,
        slot: usize,
        data: Vec<i64>,
        resources: u32,
        priority: u32,
        now: Millis,
    ) -> usize {
        let Some(concept) = self.graph.get(target) else {
            return 0;
        };
        let arity = concept.arity();
        let is_actuator = concept.actuator().is_some();
        let buf = self
            .buffers
            .entry(target)
            .or_insert_with(|| vec![None; arity]);
        if buf.len() != arity {
            buf.resize(arity, None);
        }
        buf[slot] = Some(SlotData {
            data,
            source,
            at: now,
            resources,
            priority,
        });
        let horizon = now.saturating_sub(self.params.coexist_ms);
        if !buf.iter().all(|s| s.as_ref().is_some_and(|s| s.at >= horizon)) {
            return 0;
        }
        let inputs: Vec<Vec<i64>> = buf.iter().map(|s| s.as_ref().unwrap().data.clone()).collect();
        let sources: Vec<ConceptId> = buf.iter().map(|s| s.as_ref().unwrap().source).collect();
        // A thread inherits the best budget and rank among its inputs.
        let resources = buf.iter().map(|s| s.as_ref().unwrap().resources).max().unwrap_or(resources);
        let priority = buf.iter().map(|s| s.as_ref().unwrap().priority).max().unwrap_or(priority);

        if is_actuator {
            self.actuator_request(target, source, slot, inputs, resources, now);
            return 0;
        }
        let ticket = ThreadTicket {
            concept: target,
            inputs,
            sources,
            origin: Some((source, slot)),
            priority,
            expires_at: now + self.params.ttl_ms,
            resources,
        };
        match self.enqueue(ticket, now) {
            EnqueueOutcome::Queued | EnqueueOutcome::Evicted(_) => 1,
            _ => 0,
        }
    }

    fn actuator_request(
        &mut self,
        copy_id: ConceptId,
        parent: ConceptId,
        slot: usize,
        inputs: Vec<Vec<i64>>,
        resources: u32,
        now: Millis,
    ) {
        let reward_now = self.reward_at(now);
        let beta = self.params.reward.beta;
        let learn = self.params.learn;
        let Some(copy) = self.graph.get(copy_id).and_then(|c| c.actuator()) else {
            return;
        };
        let template = copy.template;
        let value = copy.value();
        // The parent's action toward an actuator follows the copy's value.
        if let Some(p) = self.graph.get_mut(parent) {
            if let Some(a) = p.actions.iter_mut().find(|a| a.target == copy_id && a.slot == slot) {
                a.q = learning::td_update_terminal(a.q, value, &learn);
            }
        }
        let cost_model = self.graph.template(template).expect("known template").cost;
        let s = F::from_u32(resources).unwrap_or_else(F::zero);
        let copy = self
            .graph
            .get_mut(copy_id)
            .and_then(|c| c.actuator_mut())
            .expect("copy checked above");
        let activation = copy.maybe_activate(&inputs, s, &cost_model, beta, reward_now, now, &mut self.rng);
        let value = copy.value();
        self.counters.actuator_requests += 1;
        let (cost, fired) = match activation {
            actuator::Activation::Activated { cost, .. } => (cost, true),
            actuator::Activation::NotActivated { cost, .. } => (cost, false),
        };
        if fired {
            self.live += 1;
            self.counters.activations += 1;
            self.counters.resources_spent += resources as u64;
            self.outbox.push(ActuationCommand {
                at: now,
                template,
                copy: copy_id,
                inputs: inputs.clone(),
            });
        } else {
            self.counters.resources_refunded += resources as u64;
        }
        if let Some(c) = self.graph.get_mut(copy_id) {
            c.usage += 1;
        }
        self.log.push(ActuationEvent {
            at: now,
            kind: ActuationEventKind::Request,
            template,
            copy: copy_id,
            inputs,
            cost,
            resources: s,
            activated: fired,
            value,
        });
    }

    /// Descendant value used in the TD target: action values weighted by
    /// the match probability of the concept each action points to.
    fn descendant_value(&self, id: ConceptId) -> F {
        let Some(c) = self.graph.get(id) else {
            return F::zero();
        };
        let weighted: Vec<(F, F)> = c
            .actions
            .iter()
            .filter_map(|a| {
                let t = self.graph.get(a.target)?;
                let p = if t.actuator().is_some() {
                    F::one()
                } else {
                    reward::probability(&t.pooled_stats()).ok()?
                };
                Some((p, a.q))
            })
            .collect();
        learning::weighted_value(&weighted).unwrap_or_else(|_| F::zero())
    }

    /// Pop and run the highest-priority live ticket.
    pub fn step_engine(&mut self, now: Millis) -> Option<ExecutionReport<F>> {
        self.advance(now);
        let (ticket, dropped) = self.pop_runnable(now);
        self.counters.expired_dropped += dropped as u64;
        let ticket = ticket?;
        let codelet = match &self.graph.get(ticket.concept)?.kind {
            ConceptKind::Regular(c) => c.clone(),
            _ => return None,
        };
        let outcome = run_codelet(&codelet, &ticket);
        let mut report = self.apply_outcome(ticket, outcome, now);
        report.expired_dropped = dropped;
        Some(report)
    }

    fn pop_runnable(&mut self, now: Millis) -> (Option<ThreadTicket>, usize) {
        let mut dropped = 0;
        loop {
            let (t, d) = self.queue.pop_live(now);
            dropped += d;
            match t {
                Some(t) if !self.graph.get(t.concept).is_some_and(|c| c.is_regular()) => continue,
                other => return (other, dropped),
            }
        }
    }

    fn apply_outcome(&mut self, ticket: ThreadTicket, outcome: ExecOutcome, now: Millis) -> ExecutionReport<F> {
        let steps = outcome.steps();
        self.counters.executed += 1;
        self.counters.steps_consumed += steps as u64;
        self.counters.steps_granted += ticket.resources as u64;
        let window = self.params.stats_window;
        let mut report = ExecutionReport {
            concept: ticket.concept,
            outcome: outcome.clone(),
            budget: ticket.resources,
            reward: None,
            information: None,
            award: 0,
            spawned: 0,
            expired_dropped: 0,
        };
        let Some(c) = self.graph.get_mut(ticket.concept) else {
            return report;
        };
        c.usage += 1;
        let stats = c.stats.entry(ticket.sources.clone()).or_insert_with(|| match window {
            Some(w) => PartitionStats::windowed(w),
            None => PartitionStats::new(),
        });
        let ExecOutcome::Match { output, .. } = outcome else {
            // A failed match cancels the thread: no reward, no TD step.
            stats.record_negative();
            return report;
        };
        stats.record_positive();
        let p: F = reward::probability(stats).expect("just recorded a positive");
        c.output_len = Some(c.output_len.map_or(output.len(), |n| n.min(output.len())));
        let information = reward::self_information(p).unwrap_or_else(|_| F::zero());
        let r = reward::mean_reward(p).unwrap_or_else(|_| F::zero());
        let t = millis_to_secs::<F>(now);
        if self.reward.update(r, t).is_err() {
            // Only reachable if the clock was rewound externally.
            let _ = self.reward.update(r, self.reward.last_update());
        }
        self.counters.matched += 1;
        let award = reward::award_resources(information, self.params.reward.beta);
        report.reward = Some(r);
        report.information = Some(information);
        report.award = award;

        if let Some((parent, slot)) = ticket.origin {
            let next_value = self.descendant_value(ticket.concept);
            let learn = self.params.learn;
            if let Some(p) = self.graph.get_mut(parent) {
                if let Some(a) = p
                    .actions
                    .iter_mut()
                    .find(|a| a.target == ticket.concept && a.slot == slot)
                {
                    a.q = learning::td_update(a.q, r, next_value, &learn);
                }
            }
        }

        let actions = self.graph.get(ticket.concept).expect("still present").actions.clone();
        let values: Vec<F> = actions.iter().map(|a| a.q).collect();
        if let Some(i) = learning::select_action(&values, &mut self.rng) {
            let a = actions[i];
            // Actuator requests carry only the award; threads also get the base budget.
            let to_actuator = self.graph.get(a.target).is_some_and(|t| t.actuator().is_some());
            let resources = if to_actuator {
                award
            } else {
                self.params.base_resources.saturating_add(award)
            };
            let priority = self.priority_of(a.q);
            report.spawned = self.deliver(ticket.concept, a.target, a.slot, output, resources, priority, now);
        }
        report
    }

    /// Run tickets until this millisecond's step capacity is used up.
    pub fn run_tick(&mut self, now: Millis) -> Vec<ExecutionReport<F>> {
        self.advance(now);
        let mut reports = Vec::new();
        let mut used: u64 = 0;
        let capacity = self.params.steps_per_ms;
        if self.params.workers <= 1 {
            while used < capacity {
                match self.step_engine(now) {
                    Some(r) => {
                        used += r.outcome.steps().max(1) as u64;
                        reports.push(r);
                    }
                    None => break,
                }
            }
            return reports;
        }
        while used < capacity {
            let mut batch = Vec::with_capacity(self.params.workers);
            while batch.len() < self.params.workers {
                let (t, d) = self.pop_runnable(now);
                self.counters.expired_dropped += d as u64;
                match t {
                    Some(t) => {
                        let code = match &self.graph.get(t.concept).expect("runnable").kind {
                            ConceptKind::Regular(c) => c.clone(),
                            _ => unreachable!("pop_runnable yields regular concepts"),
                        };
                        batch.push((t, code));
                    }
                    None => break,
                }
            }
            if batch.is_empty() {
                break;
            }
            let outcomes: Vec<ExecOutcome> = std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|(t, code)| s.spawn(move || run_codelet(code, t)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("VM worker panicked")).collect()
            });
            for ((t, _), outcome) in batch.into_iter().zip(outcomes) {
                used += outcome.steps().max(1) as u64;
                reports.push(self.apply_outcome(t, outcome, now));
            }
        }
        reports
    }

    /// Apply value updates whose settle delay has elapsed; remove copies
    /// that fall to the threshold.
    pub fn settle(&mut self, now: Millis) -> Vec<ConceptId> {
        self.advance(now);
        let params = self.params.actuator;
        let mut removed = Vec::new();
        let copies: Vec<ConceptId> = self
            .graph
            .concepts()
            .filter(|c| c.actuator().is_some())
            .map(|c| c.id)
            .collect();
        for id in copies {
            loop {
                let reward_now = self.reward_at(now);
                let Some(delta) = actuator::delta_share::<F>(self.live) else {
                    break;
                };
                let Some(copy) = self.graph.get_mut(id).and_then(|c| c.actuator_mut()) else {
                    break;
                };
                let Some(update) = copy.value_update(reward_now, now, delta, &params) else {
                    break;
                };
                let template = copy.template;
                self.live -= 1;
                self.log.push(ActuationEvent {
                    at: now,
                    kind: ActuationEventKind::Update,
                    template,
                    copy: id,
                    inputs: vec![],
                    cost: update.record.cost_bits * self.params.reward.beta,
                    resources: F::zero(),
                    activated: true,
                    value: update.value,
                });
                if update.below_threshold {
                    removed.extend(self.remove_concept(id, now));
                    break;
                }
            }
        }
        removed
    }

    /// Remove a concept and its orphaned descendants, keeping the live
    /// activation count consistent.
    pub fn remove_concept(&mut self, id: ConceptId, now: Millis) -> Vec<ConceptId> {
        let doomed: Vec<(ConceptId, TemplateId, usize, F)> = self
            .graph
            .concepts()
            .filter_map(|c| c.actuator().map(|a| (c.id, a.template, a.pending().len(), a.value())))
            .collect();
        let removed = self.graph.remove(id);
        for (cid, template, pending, value) in doomed {
            if removed.contains(&cid) {
                self.live -= pending;
                self.log.push(ActuationEvent {
                    at: now,
                    kind: ActuationEventKind::Removed,
                    template,
                    copy: cid,
                    inputs: vec![],
                    cost: F::zero(),
                    resources: F::zero(),
                    activated: false,
                    value,
                });
            }
        }
        for r in &removed {
            self.buffers.remove(r);
        }
        self.queue.retain(|t| !removed.contains(&t.concept));
        removed
    }

    /// One exploration draw per template: maybe add a copy in a random
    /// eligible context, replacing the weakest copy when at the limit.
    pub fn explore_actuators(&mut self, now: Millis) -> Vec<ConceptId> {
        self.advance(now);
        let mut created = Vec::new();
        let templates: Vec<_> = self.graph.templates().to_vec();
        for tpl in templates {
            let copies = self.graph.copies_of(tpl.id);
            let values: Vec<F> = copies
                .iter()
                .filter_map(|&c| self.graph.get(c).and_then(|c| c.actuator()).map(|a| a.value()))
                .collect();
            let p = actuator::exploration_probability(&values, self.params.actuator.a_const);
            let u = F::from_f64(self.rng.gen::<f64>()).unwrap_or_else(F::one);
            if u >= p {
                continue;
            }
            let mut contexts: Vec<Vec<ConceptId>> = Vec::new();
            for (slot, &min) in tpl.min_sizes.iter().enumerate() {
                let eligible: Vec<ConceptId> = self
                    .graph
                    .concepts()
                    .filter(|c| c.is_regular() && c.output_len.is_some_and(|n| n >= min))
                    .filter(|c| {
                        slot > 0
                            || !c.actions.iter().any(|a| {
                                self.graph
                                    .get(a.target)
                                    .and_then(|t| t.actuator())
                                    .is_some_and(|x| x.template == tpl.id)
                            })
                    })
                    .map(|c| c.id)
                    .collect();
                contexts.push(eligible);
            }
            if contexts.iter().any(Vec::is_empty) {
                continue;
            }
            let links: Vec<ConceptId> = contexts
                .iter()
                .map(|e| *e.choose(&mut self.rng).expect("non-empty"))
                .collect();
            if let Some(limit) = self.params.actuator.n_max {
                if copies.len() >= limit {
                    let weakest = copies
                        .iter()
                        .zip(&values)
                        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                        .map(|(&c, _)| c);
                    if let Some(w) = weakest {
                        self.remove_concept(w, now);
                    }
                }
            }
            if links.iter().all(|l| self.graph.contains(*l)) {
                if let Ok(id) = self.integrate(NewConcept::ActuatorCopy(tpl.id), &links, now) {
                    created.push(id);
                }
            }
        }
        created
    }

    /// Draw random codelets until one passes the static filter (at most
    /// `attempts` draws) and wire it to random existing outputs.
    pub fn grow(&mut self, now: Millis, attempts: usize) -> Option<ConceptId> {
        self.advance(now);
        let regular = self.graph.concepts().filter(|c| c.is_regular()).count();
        if regular >= self.params.max_regular {
            return None;
        }
        let generator = self.generator.as_mut()?;
        let mut accepted = None;
        for _ in 0..attempts {
            let c = generator.next_codelet();
            self.counters.codelets_generated += 1;
            if vm::validate(&c).is_accept() {
                accepted = Some(c);
                break;
            }
        }
        let codelet = accepted?;
        self.counters.codelets_accepted += 1;
        let sources: Vec<ConceptId> = self
            .graph
            .concepts()
            .filter(|c| c.is_sensor() || (c.is_regular() && c.output_len.is_some()))
            .map(|c| c.id)
            .collect();
        if sources.is_empty() {
            return None;
        }
        let links: Vec<ConceptId> = (0..codelet.arity())
            .map(|_| *sources.choose(&mut self.rng).expect("non-empty"))
            .collect();
        self.integrate(
            NewConcept::Regular {
                codelet,
                pinned: false,
            },
            &links,
            now,
        )
        .ok()
    }

    /// Remove unpinned regular concepts past their grace period that are
    /// rarely used or whose best action value is too low.
    pub fn prune(&mut self, now: Millis) -> Vec<ConceptId> {
        self.advance(now);
        let grace = self.params.grace_ms;
        let candidates: Vec<ConceptId> = self
            .graph
            .concepts()
            .filter(|c| c.is_regular() && !c.pinned)
            .filter(|c| now.saturating_sub(c.created) >= grace)
            .filter(|c| {
                let age: F = millis_to_secs(now.saturating_sub(c.created).max(1));
                let rate = F::from_u64(c.usage).unwrap_or_else(F::zero) / age;
                c.value() < self.params.value_threshold || rate < self.params.usage_threshold
            })
            .map(|c| c.id)
            .collect();
        let mut removed = Vec::new();
        for id in candidates {
            if self.graph.contains(id) {
                removed.extend(self.remove_concept(id, now));
            }
        }
        debug_assert_eq!(self.graph.audit(), Ok(()));
        removed
    }

    pub fn drain_actuations(&mut self) -> Vec<ActuationCommand> {
        std::mem::take(&mut self.outbox)
    }

    pub fn drain_log(&mut self) -> Vec<ActuationEvent<F>> {
        std::mem::take(&mut self.log)
    }

    /// Fingerprint of the persistent engine state (graph, reward, clock).
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        super::snapshot::write_snapshot(self).hash(&mut h);
        h.finish()
    }
}

fn run_codelet(code: &Codelet, ticket: &ThreadTicket) -> ExecOutcome {
    vm::execute(code, &ticket.inputs, ticket.resources.max(1)).unwrap_or(ExecOutcome::RuntimeError {
        kind: vm::RuntimeErrorKind::OutOfScope,
        steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::parse_codelet;

    const DETECT: &str = "LOAD 0 0\nPUSH 100\nCMP\nJLT 3\nLOAD 0 0\nEMIT\nMATCH\nFAIL";

    fn setup(params: EngineParams<f64>) -> (Engine<f64>, ConceptId, ConceptId) {
        let mut e = Engine::new(params).unwrap();
        let s = e.add_sensor("eye", 1);
        let d = e
            .integrate(
                NewConcept::Regular {
                    codelet: parse_codelet(DETECT).unwrap(),
                    pinned: false,
                },
                &[s],
                0,
            )
            .unwrap();
        (e, s, d)
    }

    #[test]
    fn match_rewards_and_updates_parent_action() {
        let (mut e, s, d) = setup(EngineParams::default());
        e.sense("eye", &[50], 0).unwrap();
        let r = e.run_tick(0);
        assert_eq!(r.len(), 1);
        assert!(!r[0].outcome.is_match());
        assert_eq!(e.global_reward().value(), 0.0);
        let q_before = e.graph().get(s).unwrap().actions[0].q;
        assert_eq!(q_before, 0.1);

        e.sense("eye", &[150], 1).unwrap();
        let r = e.run_tick(1);
        assert!(r[0].outcome.is_match());
        // One positive and one negative: p = 1/2, I = 1 bit, r = 1/2.
        assert_eq!(r[0].information, Some(1.0));
        assert_eq!(r[0].reward, Some(0.5));
        assert_eq!(r[0].award, 100);
        let expected_r = 0.5 + 0.0;
        assert!((e.global_reward().value() - expected_r).abs() < 1e-15);
        // Leaf concept: descendant value is 0, so Q <- Q + alpha (r - Q).
        let q = e.graph().get(s).unwrap().actions[0].q;
        assert!((q - (0.1 + 0.1 * (0.5 - 0.1))).abs() < 1e-15);
        let stats = &e.graph().get(d).unwrap().stats[&vec![s]];
        assert_eq!((stats.n_pos(), stats.n_neg()), (1, 1));
    }

    #[test]
    fn inputs_must_coexist() {
        let mut e: Engine<f64> = Engine::new(EngineParams::default()).unwrap();
        let a = e.add_sensor("a", 1);
        let b = e.add_sensor("b", 1);
        let pair = parse_codelet(".arity 2\nLOAD 0 0\nLOAD 1 0\nADD\nEMIT\nMATCH").unwrap();
        let c = e
            .integrate(NewConcept::Regular { codelet: pair, pinned: false }, &[a, b], 0)
            .unwrap();
        e.sense("a", &[1], 0).unwrap();
        assert!(e.queue().is_empty());
        e.sense("b", &[2], 100).unwrap();
        assert!(e.queue().is_empty(), "slot a is stale");
        e.sense("a", &[3], 120).unwrap();
        let r = e.run_tick(120);
        assert_eq!(r[0].concept, c);
        assert_eq!(r[0].outcome.output(), Some(&[5][..]));
    }

    #[test]
    fn expired_tickets_are_dropped() {
        let (mut e, _, _) = setup(EngineParams::default());
        e.sense("eye", &[150], 0).unwrap();
        assert!(e.run_tick(501).is_empty());
        assert_eq!(e.counters().expired_dropped, 1);
    }

    fn with_actuator(cost: f64) -> (Engine<f64>, ConceptId, ConceptId) {
        let params = EngineParams {
            actuator: ActuatorParams {
                settle_ms: 100,
                ..ActuatorParams::default()
            },
            ..EngineParams::default()
        };
        let (mut e, _, d) = setup(params);
        let t = e.add_template("push", vec![1], CostModel::new(cost, 0.0).unwrap());
        e.sense("eye", &[150], 0).unwrap();
        e.run_tick(0);
        let copy = e.integrate(NewConcept::ActuatorCopy(t), &[d], 1).unwrap();
        (e, d, copy)
    }

    #[test]
    fn actuator_requests_fire_and_settle() {
        // Cost below any award, so every request fires.
        let (mut e, d, copy) = with_actuator(1.0);
        e.sense("eye", &[50], 2).unwrap();
        e.run_tick(2);
        e.sense("eye", &[150], 3).unwrap();
        e.run_tick(3);
        let cmds = e.drain_actuations();
        assert_eq!(cmds.len(), 1);
        assert_eq!(cmds[0].copy, copy);
        assert_eq!(cmds[0].inputs, vec![vec![150]]);
        assert_eq!(e.live_activations(), 1);
        // Parent action toward the copy moved toward gamma * A.
        let q = e.graph().get(d).unwrap().actions[0].q;
        assert!((q - (0.1 + 0.1 * (0.9 * 1.0 - 0.1))).abs() < 1e-15);

        assert!(e.settle(50).is_empty());
        assert_eq!(e.live_activations(), 1);
        e.settle(103);
        assert_eq!(e.live_activations(), 0);
        let a = e.graph().get(copy).unwrap().actuator().unwrap();
        // dR = R(103) - R(3) < 0 and cost 1 bit / 100: value drops.
        assert!(a.value() < 1.0);
        let log = e.drain_log();
        assert!(log.iter().any(|ev| ev.kind == ActuationEventKind::Update));
    }

    #[test]
    fn draining_copy_is_removed_and_count_stays_consistent() {
        // Each firing costs almost a full award's worth of bits.
        let (mut e, _, copy) = with_actuator(99.0);
        let mut t = 2;
        while e.graph().contains(copy) && t < 200_000 {
            // Alternating inputs keep the detector surprising enough to pay.
            let v = if (t / 50) % 2 == 0 { 150 } else { 50 };
            e.sense("eye", &[v], t).unwrap();
            e.run_tick(t);
            e.settle(t);
            t += 50;
        }
        assert!(!e.graph().contains(copy), "copy should drain below threshold");
        let pending: usize = e
            .graph()
            .concepts()
            .filter_map(|c| c.actuator())
            .map(|a| a.pending().len())
            .sum();
        assert_eq!(e.live_activations(), pending);
        e.graph().audit().unwrap();
    }

    #[test]
    fn prune_respects_grace_and_pins() {
        let (mut e, _, d) = setup(EngineParams {
            grace_ms: 1000,
            ..EngineParams::default()
        });
        assert!(e.prune(999).is_empty());
        assert_eq!(e.prune(1000), vec![d]);
        let (mut e, _, d) = setup(EngineParams::default());
        e.graph_mut().get_mut(d).unwrap().pinned = true;
        assert!(e.prune(1_000_000).is_empty());
    }

    #[test]
    fn grow_adds_only_valid_codelets() {
        let (mut e, _, _) = setup(EngineParams {
            generation: Some(GenParams::default()),
            ..EngineParams::default()
        });
        let mut added = 0;
        for t in 0..20 {
            if let Some(id) = e.grow(t, 1000) {
                let ConceptKind::Regular(c) = &e.graph().get(id).unwrap().kind else {
                    panic!("grown concept is not regular");
                };
                assert!(vm::validate(c).is_accept());
                added += 1;
            }
        }
        assert!(added > 0);
        assert!(e.counters().codelets_generated >= added);
        e.graph().audit().unwrap();
    }

    #[test]
    fn exploration_creates_copies_up_to_limit() {
        let (mut e, _, d) = setup(EngineParams {
            actuator: ActuatorParams {
                n_max: Some(1),
                ..ActuatorParams::default()
            },
            ..EngineParams::default()
        });
        let t = e.add_template("push", vec![1], CostModel::new(1.0, 0.0).unwrap());
        // No concept has produced output yet: nothing is eligible.
        for now in 0..50 {
            assert!(e.explore_actuators(now).is_empty());
        }
        e.sense("eye", &[150], 50).unwrap();
        e.run_tick(50);
        let mut created = 0;
        for now in 51..500 {
            created += e.explore_actuators(now).len();
        }
        assert!(created >= 1);
        assert_eq!(e.graph().copies_of(t).len(), 1);
        assert_eq!(e.graph().get(d).unwrap().actions.len(), 1);
    }

    #[test]
    fn parallel_workers_are_deterministic() {
        let run = |workers| {
            let (mut e, _, _) = setup(EngineParams {
                workers,
                generation: Some(GenParams::default()),
                ..EngineParams::default()
            });
            for t in 0..300u64 {
                if t % 10 == 0 {
                    e.grow(t, 200);
                }
                e.sense("eye", &[(t as i64 * 37) % 200], t).unwrap();
                e.run_tick(t);
            }
            e.state_hash()
        };
        assert_eq!(run(4), run(4));
        assert_eq!(run(1), run(1));
    }
}
