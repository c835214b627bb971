use std::collections::{BTreeMap, BTreeSet};

use crate::actuator::{ActuatorCopy, CostModel};
use crate::ids::{ConceptId, Millis, TemplateId};
use crate::reward::PartitionStats;
use crate::scalar::Scalar;
use crate::vm::Codelet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HierarchyError {
    #[error("expected {expected} input link(s), got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("link {parent} -> {child} would close a cycle")]
    CycleDetected { parent: ConceptId, child: ConceptId },
    #[error("input slot {slot} needs vectors of at least {min} values, source {source_id} gives {got:?}")]
    MinSizeViolated {
        slot: usize,
        min: usize,
        source_id: ConceptId,
        got: Option<usize>,
    },
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("unknown actuator template {0}")]
    UnknownTemplate(TemplateId),
    #[error("invalid link {parent} -> {child}: {why}")]
    InvalidLink {
        parent: ConceptId,
        child: ConceptId,
        why: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuditError {
    #[error("{0} links to missing concept {1}")]
    Dangling(ConceptId, ConceptId),
    #[error("link {0} -> {1} is not mirrored on both ends")]
    Asymmetric(ConceptId, ConceptId),
    #[error("sensor {0} has inputs")]
    SensorWithInputs(ConceptId),
    #[error("actuator copy {0} has outgoing links")]
    ActuatorWithOutputs(ConceptId),
    #[error("{0} has an input slot without sources")]
    EmptySlot(ConceptId),
    #[error("{0} is not reachable from any sensor")]
    Unrooted(ConceptId),
    #[error("graph contains a cycle through {0}")]
    Cycle(ConceptId),
}

/// Static description of an actuator; copies are what get linked.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorTemplate<F> {
    pub id: TemplateId,
    pub name: String,
    pub arity: usize,
    pub min_sizes: Vec<usize>,
    pub cost: CostModel<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConceptKind<F> {
    Regular(Codelet),
    Sensor { channel: String },
    Actuator(ActuatorCopy<F>),
}

/// Outgoing link together with its learned value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action<F> {
    pub target: ConceptId,
    pub slot: usize,
    pub q: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept<F> {
    pub id: ConceptId,
    pub kind: ConceptKind<F>,
    /// Sources feeding each input slot.
    pub inputs: Vec<Vec<ConceptId>>,
    pub actions: Vec<Action<F>>,
    /// Partition statistics keyed by the sources that supplied the inputs.
    pub stats: BTreeMap<Vec<ConceptId>, PartitionStats>,
    pub usage: u64,
    pub created: Millis,
    /// Exempt from pruning.
    pub pinned: bool,
    /// Shortest output seen so far (declared width for sensors).
    pub output_len: Option<usize>,
}

impl<F: Scalar> Concept<F> {
    pub fn arity(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_regular(&self) -> bool {
        matches!(self.kind, ConceptKind::Regular(_))
    }

    pub fn is_sensor(&self) -> bool {
        matches!(self.kind, ConceptKind::Sensor { .. })
    }

    pub fn actuator(&self) -> Option<&ActuatorCopy<F>> {
        match &self.kind {
            ConceptKind::Actuator(c) => Some(c),
            _ => None,
        }
    }

    pub fn actuator_mut(&mut self) -> Option<&mut ActuatorCopy<F>> {
        match &mut self.kind {
            ConceptKind::Actuator(c) => Some(c),
            _ => None,
        }
    }

    /// Pooled statistics over every input context.
    pub fn pooled_stats(&self) -> PartitionStats {
        PartitionStats::sum(self.stats.values())
    }

    /// Largest action value, zero without actions.
    pub fn value(&self) -> F {
        self.actions
            .iter()
            .map(|a| a.q)
            .fold(F::zero(), |m, q| if q > m { q } else { m })
    }
}

/// What to integrate: a regular concept or a fresh copy of a template.
#[derive(Debug, Clone, PartialEq)]
pub enum NewConcept {
    Regular { codelet: Codelet, pinned: bool },
    ActuatorCopy(TemplateId),
}

/// The concept DAG: sensors at the roots, actuator copies at the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptGraph<F> {
    concepts: BTreeMap<ConceptId, Concept<F>>,
    templates: Vec<ActuatorTemplate<F>>,
    next_id: u32,
    q0: F,
    a0: F,
}

impl<F: Scalar> ConceptGraph<F> {
    /// `q0` seeds new action values, `a0` new actuator copy values.
    pub fn new(q0: F, a0: F) -> Self {
        ConceptGraph {
            concepts: BTreeMap::new(),
            templates: Vec::new(),
            next_id: 0,
            q0,
            a0,
        }
    }

    pub fn q0(&self) -> F {
        self.q0
    }

    pub fn a0(&self) -> F {
        self.a0
    }

    pub fn get(&self, id: ConceptId) -> Option<&Concept<F>> {
        self.concepts.get(&id)
    }

    pub fn get_mut(&mut self, id: ConceptId) -> Option<&mut Concept<F>> {
        self.concepts.get_mut(&id)
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        self.concepts.contains_key(&id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept<F>> {
        self.concepts.values()
    }

    pub fn ids(&self) -> Vec<ConceptId> {
        self.concepts.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn templates(&self) -> &[ActuatorTemplate<F>] {
        &self.templates
    }

    pub fn template(&self, id: TemplateId) -> Option<&ActuatorTemplate<F>> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn template_by_name(&self, name: &str) -> Option<&ActuatorTemplate<F>> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn sensor(&self, channel: &str) -> Option<ConceptId> {
        self.concepts.values().find_map(|c| match &c.kind {
            ConceptKind::Sensor { channel: ch } if ch == channel => Some(c.id),
            _ => None,
        })
    }

    /// Copies of a template currently in the graph.
    pub fn copies_of(&self, template: TemplateId) -> Vec<ConceptId> {
        self.concepts
            .values()
            .filter(|c| c.actuator().is_some_and(|a| a.template == template))
            .map(|c| c.id)
            .collect()
    }

    fn fresh_id(&mut self) -> ConceptId {
        let id = ConceptId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn add_template(
        &mut self,
        name: impl Into<String>,
        min_sizes: Vec<usize>,
        cost: CostModel<F>,
    ) -> TemplateId {
        let id = TemplateId(self.templates.len() as u32);
        self.templates.push(ActuatorTemplate {
            id,
            name: name.into(),
            arity: min_sizes.len().max(1),
            min_sizes: if min_sizes.is_empty() { vec![0] } else { min_sizes },
            cost,
        });
        id
    }

    pub fn add_sensor(&mut self, channel: impl Into<String>, width: usize, now: Millis) -> ConceptId {
        let id = self.fresh_id();
        self.concepts.insert(
            id,
            Concept {
                id,
                kind: ConceptKind::Sensor {
                    channel: channel.into(),
                },
                inputs: Vec::new(),
                actions: Vec::new(),
                stats: BTreeMap::new(),
                usage: 0,
                created: now,
                pinned: true,
                output_len: Some(width),
            },
        );
        id
    }

    /// Insert a concept with one source per input slot. Actuator templates
    /// are instantiated as a fresh copy bound to this context.
    pub fn integrate(
        &mut self,
        new: NewConcept,
        links: &[ConceptId],
        now: Millis,
    ) -> Result<ConceptId, HierarchyError> {
        let (arity, min_sizes) = match &new {
            NewConcept::Regular { codelet, .. } => (codelet.arity(), None),
            NewConcept::ActuatorCopy(t) => {
                let tpl = self.template(*t).ok_or(HierarchyError::UnknownTemplate(*t))?;
                (tpl.arity, Some(tpl.min_sizes.clone()))
            }
        };
        if links.len() != arity {
            return Err(HierarchyError::ArityMismatch {
                expected: arity,
                got: links.len(),
            });
        }
        let pending = ConceptId(self.next_id);
        for (slot, &src) in links.iter().enumerate() {
            let parent = self.get(src).ok_or(HierarchyError::UnknownConcept(src))?;
            self.check_parent(parent, pending)?;
            if let Some(min) = min_sizes.as_ref() {
                if parent.is_sensor() {
                    return Err(HierarchyError::InvalidLink {
                        parent: src,
                        child: pending,
                        why: "actuators attach to regular concepts",
                    });
                }
                if parent.output_len.is_none_or(|n| n < min[slot]) {
                    return Err(HierarchyError::MinSizeViolated {
                        slot,
                        min: min[slot],
                        source_id: src,
                        got: parent.output_len,
                    });
                }
            }
        }

        let id = self.fresh_id();
        let (kind, pinned) = match new {
            NewConcept::Regular { codelet, pinned } => (ConceptKind::Regular(codelet), pinned),
            NewConcept::ActuatorCopy(t) => (
                ConceptKind::Actuator(ActuatorCopy::new(t, links[0], self.a0)),
                false,
            ),
        };
        self.concepts.insert(
            id,
            Concept {
                id,
                kind,
                inputs: links.iter().map(|&l| vec![l]).collect(),
                actions: Vec::new(),
                stats: BTreeMap::new(),
                usage: 0,
                created: now,
                pinned,
                output_len: None,
            },
        );
        let q0 = self.q0;
        for (slot, &src) in links.iter().enumerate() {
            self.concepts
                .get_mut(&src)
                .expect("checked above")
                .actions
                .push(Action {
                    target: id,
                    slot,
                    q: q0,
                });
        }
        Ok(id)
    }

    fn check_parent(&self, parent: &Concept<F>, child: ConceptId) -> Result<(), HierarchyError> {
        if parent.actuator().is_some() {
            return Err(HierarchyError::InvalidLink {
                parent: parent.id,
                child,
                why: "actuator copies are leaves",
            });
        }
        Ok(())
    }

    /// Add `parent` as an extra source of `child`'s input `slot`.
    pub fn link(&mut self, parent: ConceptId, child: ConceptId, slot: usize) -> Result<(), HierarchyError> {
        let p = self.get(parent).ok_or(HierarchyError::UnknownConcept(parent))?;
        let c = self.get(child).ok_or(HierarchyError::UnknownConcept(child))?;
        self.check_parent(p, child)?;
        if c.is_sensor() {
            return Err(HierarchyError::InvalidLink {
                parent,
                child,
                why: "sensors are roots",
            });
        }
        if slot >= c.arity() {
            return Err(HierarchyError::ArityMismatch {
                expected: c.arity(),
                got: slot + 1,
            });
        }
        if c.inputs[slot].contains(&parent) {
            return Ok(());
        }
        if let ConceptKind::Actuator(copy) = &c.kind {
            let tpl = self.template(copy.template).expect("copy of a known template");
            if p.output_len.is_none_or(|n| n < tpl.min_sizes[slot]) {
                return Err(HierarchyError::MinSizeViolated {
                    slot,
                    min: tpl.min_sizes[slot],
                    source_id: parent,
                    got: p.output_len,
                });
            }
        }
        if parent == child || self.reaches(child, parent) {
            return Err(HierarchyError::CycleDetected { parent, child });
        }
        let q0 = self.q0;
        self.concepts.get_mut(&child).unwrap().inputs[slot].push(parent);
        self.concepts.get_mut(&parent).unwrap().actions.push(Action {
            target: child,
            slot,
            q: q0,
        });
        Ok(())
    }

    /// Whether `to` is reachable from `from` along outgoing links.
    pub fn reaches(&self, from: ConceptId, to: ConceptId) -> bool {
        let mut seen = BTreeSet::new();
        let mut work = vec![from];
        while let Some(id) = work.pop() {
            if id == to {
                return true;
            }
            if !seen.insert(id) {
                continue;
            }
            if let Some(c) = self.get(id) {
                work.extend(c.actions.iter().map(|a| a.target));
            }
        }
        false
    }

    /// Longest path from a sensor root; sensors have depth 0.
    pub fn depth(&self, id: ConceptId) -> Option<usize> {
        let c = self.get(id)?;
        if c.is_sensor() {
            return Some(0);
        }
        c.inputs
            .iter()
            .flatten()
            .filter_map(|&p| self.depth(p))
            .max()
            .map(|d| d + 1)
    }

    /// Remove a concept and every descendant left with an empty input slot.
    /// Returns removed ids in removal order.
    pub fn remove(&mut self, id: ConceptId) -> Vec<ConceptId> {
        let mut removed = Vec::new();
        let mut work = vec![id];
        while let Some(id) = work.pop() {
            let Some(c) = self.concepts.remove(&id) else {
                continue;
            };
            for src in c.inputs.iter().flatten() {
                if let Some(p) = self.concepts.get_mut(src) {
                    p.actions.retain(|a| a.target != id);
                }
            }
            for a in &c.actions {
                if let Some(child) = self.concepts.get_mut(&a.target) {
                    for slot in child.inputs.iter_mut() {
                        slot.retain(|&s| s != id);
                    }
                    if child.inputs.iter().any(Vec::is_empty) {
                        work.push(child.id);
                    } else if let ConceptKind::Actuator(copy) = &mut child.kind {
                        if copy.context == id {
                            copy.context = child.inputs[0][0];
                        }
                    }
                }
            }
            removed.push(id);
        }
        removed
    }

    /// Full consistency check of the graph.
    pub fn audit(&self) -> Result<(), AuditError> {
        for c in self.concepts.values() {
            match &c.kind {
                ConceptKind::Sensor { .. } if !c.inputs.is_empty() => {
                    return Err(AuditError::SensorWithInputs(c.id))
                }
                ConceptKind::Actuator(_) if !c.actions.is_empty() => {
                    return Err(AuditError::ActuatorWithOutputs(c.id))
                }
                _ => {}
            }
            for (slot, sources) in c.inputs.iter().enumerate() {
                if sources.is_empty() {
                    return Err(AuditError::EmptySlot(c.id));
                }
                for s in sources {
                    let p = self.get(*s).ok_or(AuditError::Dangling(c.id, *s))?;
                    if !p.actions.iter().any(|a| a.target == c.id && a.slot == slot) {
                        return Err(AuditError::Asymmetric(*s, c.id));
                    }
                }
            }
            for a in &c.actions {
                let t = self.get(a.target).ok_or(AuditError::Dangling(c.id, a.target))?;
                if !t.inputs.get(a.slot).is_some_and(|s| s.contains(&c.id)) {
                    return Err(AuditError::Asymmetric(c.id, a.target));
                }
            }
        }
        // Kahn's algorithm: every concept must be ordered, and every
        // non-sensor must descend from a sensor.
        let mut indegree: BTreeMap<ConceptId, usize> = self
            .concepts
            .values()
            .map(|c| (c.id, c.inputs.iter().map(Vec::len).sum()))
            .collect();
        let mut rooted: BTreeSet<ConceptId> = BTreeSet::new();
        let mut ready: Vec<ConceptId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        for &id in &ready {
            if self.concepts[&id].is_sensor() {
                rooted.insert(id);
            }
        }
        let mut ordered = 0;
        while let Some(id) = ready.pop() {
            ordered += 1;
            let is_rooted = rooted.contains(&id);
            for a in &self.concepts[&id].actions {
                if is_rooted {
                    rooted.insert(a.target);
                }
                let d = indegree.get_mut(&a.target).expect("audited above");
                *d -= 1;
                if *d == 0 {
                    ready.push(a.target);
                }
            }
        }
        if ordered != self.concepts.len() {
            let stuck = indegree.iter().find(|(_, &d)| d > 0).map(|(&id, _)| id);
            return Err(AuditError::Cycle(stuck.unwrap_or(ConceptId(0))));
        }
        if let Some(c) = self.concepts.values().find(|c| !rooted.contains(&c.id)) {
            return Err(AuditError::Unrooted(c.id));
        }
        Ok(())
    }

    /// Rebuild a graph from parts (snapshot loading).
    pub(crate) fn from_parts(
        concepts: Vec<Concept<F>>,
        templates: Vec<ActuatorTemplate<F>>,
        next_id: u32,
        q0: F,
        a0: F,
    ) -> Self {
        ConceptGraph {
            concepts: concepts.into_iter().map(|c| (c.id, c)).collect(),
            templates,
            next_id,
            q0,
            a0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::parse_codelet;

    fn graph() -> (ConceptGraph<f64>, ConceptId, ConceptId) {
        let mut g = ConceptGraph::new(0.1, 1.0);
        let a = g.add_sensor("left", 4, 0);
        let b = g.add_sensor("right", 4, 0);
        (g, a, b)
    }

    fn regular(src: &str) -> NewConcept {
        NewConcept::Regular {
            codelet: parse_codelet(src).unwrap(),
            pinned: false,
        }
    }

    const PAIR: &str = ".arity 2\nLOAD 0 0\nLOAD 1 0\nADD\nEMIT\nMATCH";
    const ONE: &str = "LOAD 0 0\nEMIT\nMATCH";

    #[test]
    fn two_input_concept_sits_at_depth_one() {
        let (mut g, a, b) = graph();
        let c = g.integrate(regular(PAIR), &[a, b], 0).unwrap();
        assert_eq!(g.depth(c), Some(1));
        assert_eq!(g.get(a).unwrap().actions[0].target, c);
        assert_eq!(g.get(b).unwrap().actions[0].slot, 1);
        g.audit().unwrap();
    }

    #[test]
    fn arity_is_enforced() {
        let (mut g, a, _) = graph();
        assert_eq!(
            g.integrate(regular(PAIR), &[a], 0),
            Err(HierarchyError::ArityMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn cycles_are_refused() {
        let (mut g, a, _) = graph();
        let x = g.integrate(regular(ONE), &[a], 0).unwrap();
        let y = g.integrate(regular(ONE), &[x], 0).unwrap();
        assert_eq!(
            g.link(y, x, 0),
            Err(HierarchyError::CycleDetected { parent: y, child: x })
        );
        assert!(matches!(g.link(x, x, 0), Err(HierarchyError::CycleDetected { .. })));
        g.audit().unwrap();
    }

    #[test]
    fn actuator_templates_are_copied_per_context() {
        let (mut g, a, b) = graph();
        let t = g.add_template("arm", vec![1], CostModel::new(100.0, 1.0).unwrap());
        let x = g.integrate(regular(ONE), &[a], 0).unwrap();
        let y = g.integrate(regular(ONE), &[b], 0).unwrap();
        g.get_mut(x).unwrap().output_len = Some(1);
        g.get_mut(y).unwrap().output_len = Some(2);
        let t1 = g.integrate(NewConcept::ActuatorCopy(t), &[x], 0).unwrap();
        let t2 = g.integrate(NewConcept::ActuatorCopy(t), &[y], 0).unwrap();
        assert_ne!(t1, t2);
        assert_eq!(g.copies_of(t), vec![t1, t2]);
        g.audit().unwrap();

        // Pruning the first context leaves the second copy intact.
        let before = g.get(t2).unwrap().clone();
        let removed = g.remove(x);
        assert_eq!(removed, vec![x, t1]);
        assert_eq!(g.get(t2), Some(&before));
        g.audit().unwrap();
    }

    #[test]
    fn actuator_link_rules() {
        let (mut g, a, _) = graph();
        let t = g.add_template("arm", vec![3], CostModel::new(100.0, 1.0).unwrap());
        let x = g.integrate(regular(ONE), &[a], 0).unwrap();
        assert!(matches!(
            g.integrate(NewConcept::ActuatorCopy(t), &[x], 0),
            Err(HierarchyError::MinSizeViolated { got: None, .. })
        ));
        g.get_mut(x).unwrap().output_len = Some(2);
        assert!(matches!(
            g.integrate(NewConcept::ActuatorCopy(t), &[x], 0),
            Err(HierarchyError::MinSizeViolated { got: Some(2), .. })
        ));
        assert!(matches!(
            g.integrate(NewConcept::ActuatorCopy(t), &[a], 0),
            Err(HierarchyError::InvalidLink { .. })
        ));
        g.get_mut(x).unwrap().output_len = Some(3);
        let c = g.integrate(NewConcept::ActuatorCopy(t), &[x], 0).unwrap();
        assert!(matches!(
            g.integrate(regular(ONE), &[c], 0),
            Err(HierarchyError::InvalidLink { .. })
        ));
    }

    #[test]
    fn removal_keeps_multiply_fed_children() {
        let (mut g, a, b) = graph();
        let x = g.integrate(regular(ONE), &[a], 0).unwrap();
        let y = g.integrate(regular(ONE), &[b], 0).unwrap();
        let z = g.integrate(regular(ONE), &[x], 0).unwrap();
        g.link(y, z, 0).unwrap();
        assert_eq!(g.remove(x), vec![x]);
        assert_eq!(g.get(z).unwrap().inputs, vec![vec![y]]);
        g.audit().unwrap();
        assert_eq!(g.remove(y), vec![y, z]);
        g.audit().unwrap();
    }

    #[test]
    fn audit_catches_corruption() {
        let (mut g, a, _) = graph();
        let x = g.integrate(regular(ONE), &[a], 0).unwrap();
        g.get_mut(a).unwrap().actions.clear();
        assert_eq!(g.audit(), Err(AuditError::Asymmetric(a, x)));
    }
}
