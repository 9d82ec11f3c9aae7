//! Triple snapshots of a world and the assertion rules checked against them
//! after every step.
//!
//! Rule patterns use a compact text form, one triple per string:
//!
//! ```text
//! ?p locatedIn ?c
//! ?s hasState:phase "solid"
//! ?p hasState:Location "upper"|"drop"
//! ```
//!
//! `?name` is a variable, a double-quoted token is a literal (alternatives
//! separated by `|`), anything else is an identifier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule `{0}` is already registered")]
    DuplicateRule(String),
    #[error("rule `{0}` has no ground term in its pattern")]
    FullyVariable(String),
    #[error("rule `{0}` has an empty pattern")]
    EmptyPattern(String),
    #[error("cannot parse triple pattern `{0}`: {1}")]
    BadPattern(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Id(String),
    Lit(String),
}

impl Term {
    pub fn id(s: impl Into<String>) -> Term {
        Term::Id(s.into())
    }

    pub fn lit(s: impl Into<String>) -> Term {
        Term::Lit(s.into())
    }

    pub fn as_str(&self) -> &str {
        match self {
            Term::Id(s) | Term::Lit(s) => s,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Id(s) => f.write_str(s),
            Term::Lit(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: impl Into<String>, object: Term) -> Self {
        Triple {
            subject,
            predicate: predicate.into(),
            object,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

pub type TripleSet = BTreeSet<Triple>;

/// Flattens the world into triples.
///
/// Emitted predicates: `isA`, `hasState:<var>`, `hasProp:<prop>`,
/// `hasPart:<role>`, `portionOf`, `locatedIn`, `movedFrom`, `hasCapacity`,
/// `medium`, `connectedTo` (fluid), `nerveTo`, `ambient:<key>`. Retired
/// entities are left out.
pub fn derive_triples(world: &World) -> TripleSet {
    let mut out = TripleSet::new();
    for obj in world.objects.values().filter(|o| o.alive) {
        let s = Term::id(obj.id.0.clone());
        out.insert(Triple::new(s.clone(), "isA", Term::id(&obj.kind)));
        for (var, label) in &obj.states {
            out.insert(Triple::new(s.clone(), format!("hasState:{var}"), Term::lit(label)));
        }
        for (prop, value) in &obj.properties {
            out.insert(Triple::new(
                s.clone(),
                format!("hasProp:{prop}"),
                Term::lit(&value.level),
            ));
        }
        for part in &obj.parts {
            out.insert(Triple::new(
                s.clone(),
                format!("hasPart:{}", part.role),
                Term::id(part.child.0.clone()),
            ));
        }
    }
    for sub in world.substances.values() {
        let s = Term::id(&sub.name);
        out.insert(Triple::new(s.clone(), "isA", Term::id("Substance")));
        out.insert(Triple::new(
            s,
            format!("hasState:{}", sub.phase_space.variable),
            Term::lit(&sub.phase),
        ));
    }
    for p in world.live_portions() {
        let s = Term::id(p.id.to_string());
        out.insert(Triple::new(s.clone(), "portionOf", Term::id(&p.substance)));
        if let Some(kind) = &p.kind {
            out.insert(Triple::new(s.clone(), "isA", Term::id(kind)));
        }
        if let Some(c) = &p.compartment {
            out.insert(Triple::new(s.clone(), "locatedIn", Term::id(c)));
        }
        for c in &p.arrived_from {
            out.insert(Triple::new(s.clone(), "movedFrom", Term::id(c)));
        }
        for (var, label) in &p.states {
            out.insert(Triple::new(s.clone(), format!("hasState:{var}"), Term::lit(label)));
        }
        for (prop, value) in &p.properties {
            out.insert(Triple::new(
                s.clone(),
                format!("hasProp:{prop}"),
                Term::lit(&value.level),
            ));
        }
    }
    for comp in world.topology.compartments.values() {
        let s = Term::id(&comp.name);
        out.insert(Triple::new(s.clone(), "isA", Term::id("Compartment")));
        let medium = serde_json::to_value(comp.medium)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        out.insert(Triple::new(s.clone(), "medium", Term::lit(medium)));
        if let Some(cap) = comp.capacity {
            out.insert(Triple::new(s.clone(), "hasCapacity", Term::lit(cap.to_string())));
        }
        if let Some(structure) = &comp.structure {
            out.insert(Triple::new(s, "structure", Term::id(structure.0.clone())));
        }
    }
    for edge in &world.topology.connections {
        let predicate = match edge.conduit {
            crate::topology::ConduitKind::Fluid => "connectedTo",
            crate::topology::ConduitKind::Nerve => "nerveTo",
        };
        out.insert(Triple::new(
            Term::id(&edge.from),
            predicate,
            Term::id(&edge.to),
        ));
    }
    for (key, level) in world.microworld.iter() {
        out.insert(Triple::new(
            Term::id("microworld"),
            format!("ambient:{key}"),
            Term::lit(level),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternTerm {
    Var(String),
    Id(String),
    Lit(Vec<String>),
}

impl PatternTerm {
    fn is_ground(&self) -> bool {
        !matches!(self, PatternTerm::Var(_))
    }

    fn parse(token: &str) -> Result<PatternTerm, String> {
        if let Some(var) = token.strip_prefix('?') {
            if var.is_empty() {
                return Err("empty variable name".into());
            }
            return Ok(PatternTerm::Var(var.to_string()));
        }
        if token.starts_with('"') {
            let mut alts = Vec::new();
            for part in token.split('|') {
                let inner = part
                    .strip_prefix('"')
                    .and_then(|p| p.strip_suffix('"'))
                    .ok_or_else(|| format!("unterminated literal `{part}`"))?;
                alts.push(inner.to_string());
            }
            return Ok(PatternTerm::Lit(alts));
        }
        Ok(PatternTerm::Id(token.to_string()))
    }

    /// Unifies with a concrete term under `bindings`, extending them.
    fn unify(&self, term: &Term, bindings: &mut Bindings) -> bool {
        match self {
            PatternTerm::Id(id) => matches!(term, Term::Id(t) if t == id),
            PatternTerm::Lit(alts) => matches!(term, Term::Lit(t) if alts.contains(t)),
            PatternTerm::Var(v) => match bindings.get(v) {
                Some(bound) => bound == term,
                None => {
                    bindings.insert(v.clone(), term.clone());
                    true
                }
            },
        }
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Id(id) => f.write_str(id),
            PatternTerm::Lit(alts) => {
                let quoted: Vec<String> = alts.iter().map(|a| format!("\"{a}\"")).collect();
                f.write_str(&quoted.join("|"))
            }
        }
    }
}

pub type Bindings = BTreeMap<String, Term>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    fn ground_terms(&self) -> usize {
        [&self.subject, &self.predicate, &self.object]
            .into_iter()
            .filter(|t| t.is_ground())
            .count()
    }

    fn matches(&self, triple: &Triple, bindings: &Bindings) -> Option<Bindings> {
        let mut b = bindings.clone();
        let pred = Term::Id(triple.predicate.clone());
        (self.subject.unify(&triple.subject, &mut b)
            && self.predicate.unify(&pred, &mut b)
            && self.object.unify(&triple.object, &mut b))
        .then_some(b)
    }
}

impl FromStr for TriplePattern {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| RuleError::BadPattern(s.to_string(), why.to_string());
        let tokens: Vec<&str> = s.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(bad("expected exactly three terms"));
        }
        let term = |t: &str| PatternTerm::parse(t).map_err(|e| bad(&e));
        let predicate = term(tokens[1])?;
        if matches!(predicate, PatternTerm::Lit(_)) {
            return Err(bad("predicate cannot be a literal"));
        }
        Ok(TriplePattern {
            subject: term(tokens[0])?,
            predicate,
            object: term(tokens[2])?,
        })
    }
}

impl TryFrom<String> for TriplePattern {
    type Error = RuleError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TriplePattern> for String {
    fn from(p: TriplePattern) -> String {
        p.to_string()
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// All extensions of `seed` under which every pattern matches some triple.
pub fn solve(patterns: &[TriplePattern], triples: &TripleSet, seed: &Bindings) -> Vec<Bindings> {
    let mut frontier = vec![seed.clone()];
    for pattern in patterns {
        let mut next = Vec::new();
        for b in &frontier {
            next.extend(triples.iter().filter_map(|t| pattern.matches(t, b)));
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    let unique: BTreeSet<Bindings> = frontier.into_iter().collect();
    unique.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    MustExist,
    MustNotExist,
    CountInSet(BTreeSet<usize>),
}

/// For each solution of `focus` (or once, when `focus` is empty), `pattern`
/// is solved under that solution and its solution count is held against
/// `expectation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionRule {
    pub name: String,
    #[serde(default)]
    pub focus: Vec<TriplePattern>,
    pub pattern: Vec<TriplePattern>,
    pub expectation: Expectation,
    #[serde(default)]
    pub scope: Option<String>,
}

impl AssertionRule {
    pub fn new(
        name: &str,
        focus: &[&str],
        pattern: &[&str],
        expectation: Expectation,
    ) -> Result<Self, RuleError> {
        let parse = |xs: &[&str]| -> Result<Vec<TriplePattern>, RuleError> {
            xs.iter().map(|s| s.parse()).collect()
        };
        Ok(AssertionRule {
            name: name.to_string(),
            focus: parse(focus)?,
            pattern: parse(pattern)?,
            expectation,
            scope: None,
        })
    }

    pub fn scoped(mut self, subsystem: &str) -> Self {
        self.scope = Some(subsystem.to_string());
        self
    }

    pub fn check_shape(&self) -> Result<(), RuleError> {
        if self.pattern.is_empty() {
            return Err(RuleError::EmptyPattern(self.name.clone()));
        }
        if self.pattern.iter().all(|p| p.ground_terms() == 0) {
            return Err(RuleError::FullyVariable(self.name.clone()));
        }
        Ok(())
    }

    pub fn evaluate(&self, triples: &TripleSet) -> Vec<Violation> {
        let foci = if self.focus.is_empty() {
            vec![Bindings::new()]
        } else {
            solve(&self.focus, triples, &Bindings::new())
        };
        let mut out = Vec::new();
        for focus in foci {
            match &self.expectation {
                Expectation::MustExist => {
                    if solve(&self.pattern, triples, &focus).is_empty() {
                        out.push(Violation::new(&self.name, &focus));
                    }
                }
                Expectation::MustNotExist => {
                    for b in solve(&self.pattern, triples, &focus) {
                        out.push(Violation::new(&self.name, &b));
                    }
                }
                Expectation::CountInSet(allowed) => {
                    let n = solve(&self.pattern, triples, &focus).len();
                    if !allowed.contains(&n) {
                        let mut v = Violation::new(&self.name, &focus);
                        v.bindings.insert("count".into(), n.to_string());
                        out.push(v);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub bindings: BTreeMap<String, String>,
}

impl Violation {
    pub fn new(rule: &str, bindings: &Bindings) -> Self {
        Violation {
            rule: rule.to_string(),
            bindings: bindings
                .iter()
                .map(|(k, v)| (k.clone(), v.as_str().to_string()))
                .collect(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        if !self.bindings.is_empty() {
            let parts: Vec<String> = self
                .bindings
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            write!(f, " ({})", parts.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Halt,
    Warn,
    Off,
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "halt" => Ok(Policy::Halt),
            "warn" => Ok(Policy::Warn),
            "off" => Ok(Policy::Off),
            other => Err(format!("unknown validation policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub step: u64,
    pub violations: Vec<Violation>,
    pub policy: Policy,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleHandle(pub usize);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    rules: Vec<AssertionRule>,
}

impl RuleSet {
    pub fn new() -> Self {
        RuleSet::default()
    }

    pub fn register_rule(&mut self, rule: AssertionRule) -> Result<RuleHandle, RuleError> {
        if self.rules.iter().any(|r| r.name == rule.name) {
            return Err(RuleError::DuplicateRule(rule.name));
        }
        rule.check_shape()?;
        self.rules.push(rule);
        Ok(RuleHandle(self.rules.len() - 1))
    }

    pub fn rules(&self) -> &[AssertionRule] {
        &self.rules
    }

    pub fn get(&self, name: &str) -> Option<&AssertionRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn check(&self) -> Result<(), RuleError> {
        let mut names = BTreeSet::new();
        for r in &self.rules {
            if !names.insert(&r.name) {
                return Err(RuleError::DuplicateRule(r.name.clone()));
            }
            r.check_shape()?;
        }
        Ok(())
    }

    /// Evaluates every rule against a fresh snapshot. With policy `off` no
    /// rule is evaluated but a report is still produced.
    pub fn validate(&self, world: &World, step: u64, policy: Policy) -> ValidationReport {
        let violations = if policy == Policy::Off {
            Vec::new()
        } else {
            let triples = derive_triples(world);
            self.rules
                .iter()
                .flat_map(|r| r.evaluate(&triples))
                .collect()
        };
        ValidationReport {
            step,
            violations,
            policy,
        }
    }
}

/// Name of the rule whose violations also come from refused pushes.
pub const CONNECTION_RULE: &str = "connection-exists";

/// Rules every model carries: locations resolve, pushes follow connections,
/// capacities hold.
pub fn standard_rules(world: &World) -> Vec<AssertionRule> {
    let mut rules = vec![
        AssertionRule::new(
            "location-resolves",
            &["?p locatedIn ?c"],
            &["?c isA Compartment"],
            Expectation::MustExist,
        )
        .expect("static pattern"),
        AssertionRule::new(
            CONNECTION_RULE,
            &["?p movedFrom ?a", "?p locatedIn ?b"],
            &["?a connectedTo ?b"],
            Expectation::MustExist,
        )
        .expect("static pattern"),
    ];
    let capacities: BTreeSet<u32> = world
        .topology
        .compartments
        .values()
        .filter_map(|c| c.capacity)
        .collect();
    for cap in capacities {
        let focus = format!("?c hasCapacity \"{cap}\"");
        rules.push(
            AssertionRule::new(
                &format!("capacity-{cap}"),
                &[focus.as_str()],
                &["?p locatedIn ?c"],
                Expectation::CountInSet((0..=cap as usize).collect()),
            )
            .expect("static pattern"),
        );
    }
    rules
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::Substance;
    use crate::topology::Medium;

    fn world_with_portion() -> (World, String) {
        let mut w = World::new();
        w.add_substance(Substance::new("blood", "liquid")).unwrap();
        w.topology
            .add_compartment("LeftAtrium", Medium::BloodPath, Some(1), None, None)
            .unwrap();
        let id = w.seed_portion("blood", None, Default::default()).unwrap();
        w.portions.get_mut(&id).unwrap().compartment = Some("LeftAtrium".into());
        w.topology
            .compartments
            .get_mut("LeftAtrium")
            .unwrap()
            .contents
            .push(id);
        (w, id.to_string())
    }

    #[test]
    fn located_in_triple_present() {
        let (w, id) = world_with_portion();
        let t = derive_triples(&w);
        assert!(t.contains(&Triple::new(
            Term::id(id),
            "locatedIn",
            Term::id("LeftAtrium")
        )));
    }

    #[test]
    fn empty_world_has_only_ambient_triples() {
        let t = derive_triples(&World::new());
        assert!(t.iter().all(|t| t.subject == Term::id("microworld")));
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn pattern_round_trips_through_text() {
        for src in ["?p locatedIn ?c", "?s hasState:phase \"solid\"", "?p hasState:Location \"upper\"|\"drop\""] {
            let p: TriplePattern = src.parse().unwrap();
            assert_eq!(p.to_string(), src);
        }
        assert!("?p locatedIn".parse::<TriplePattern>().is_err());
        assert!("?p \"x\" ?o".parse::<TriplePattern>().is_err());
    }

    #[test]
    fn register_rules() {
        let mut rs = RuleSet::new();
        for r in standard_rules(&World::new()) {
            rs.register_rule(r).unwrap();
        }
        let dup = standard_rules(&World::new()).remove(0);
        assert_eq!(
            rs.register_rule(dup).unwrap_err(),
            RuleError::DuplicateRule("location-resolves".into())
        );
        let loose = AssertionRule::new("loose", &[], &["?s ?p ?o"], Expectation::MustExist).unwrap();
        assert_eq!(
            rs.register_rule(loose).unwrap_err(),
            RuleError::FullyVariable("loose".into())
        );
    }

    #[test]
    fn legal_world_passes_and_dangling_location_fails() {
        let (mut w, _) = world_with_portion();
        let mut rs = RuleSet::new();
        for r in standard_rules(&w) {
            rs.register_rule(r).unwrap();
        }
        assert!(rs.validate(&w, 0, Policy::Halt).passed());

        w.topology.compartments.remove("LeftAtrium");
        let report = rs.validate(&w, 1, Policy::Halt);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, "location-resolves");
        assert_eq!(report.violations[0].bindings["c"], "LeftAtrium");
    }

    #[test]
    fn off_policy_still_reports() {
        let (mut w, _) = world_with_portion();
        w.topology.compartments.remove("LeftAtrium");
        let mut rs = RuleSet::new();
        for r in standard_rules(&World::new()) {
            rs.register_rule(r).unwrap();
        }
        let report = rs.validate(&w, 3, Policy::Off);
        assert!(report.passed());
        assert_eq!(report.step, 3);
    }

    #[test]
    fn count_in_set_reports_count() {
        let (w, _) = world_with_portion();
        let rule = AssertionRule::new(
            "two-blood",
            &[],
            &["?p portionOf blood"],
            Expectation::CountInSet([2].into_iter().collect()),
        )
        .unwrap();
        let v = rule.evaluate(&derive_triples(&w));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].bindings["count"], "1");
    }
}
