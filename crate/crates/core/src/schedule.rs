//! Slot-indexed transmission schedules, the half-duplex validator and
//! symbolic verification that the root ends up with every contribution
//! exactly once.
//!
//! Slots are 1-based. Data received in slot `s` can be forwarded from slot
//! `s + 1` on. A node adds its own contribution the first time it sends an
//! aggregate; later aggregates carry only what it received since.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::clique::FunctionSpec;
use crate::error::{Error, Result};
use crate::geometry::{pairwise_sum, Deployment, EnergyParams};
use crate::tradeoff::AggregationPlan;
use crate::tree::{tree_latency, AggregationTree};

/// A contribution tracked through the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    /// The raw measurement of a node.
    Measurement(usize),
    /// The value of a clique term, by clique id.
    Clique(usize),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Measurement(v) => write!(f, "m{v}"),
            Self::Clique(c) => write!(f, "c{c}"),
        }
    }
}

impl std::str::FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("bad token `{s}`"));
        let (kind, id) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        let id: usize = id.parse().map_err(|_| bad())?;
        match kind {
            "m" => Ok(Self::Measurement(id)),
            "c" => Ok(Self::Clique(id)),
            _ => Err(bad()),
        }
    }
}

/// What a transmission carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    /// Everything the sender holds, folded into one partial aggregate.
    Aggregate,
    /// One token forwarded unchanged.
    Single(Token),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub tx: usize,
    pub rx: usize,
    pub payload: Payload,
}

impl Transmission {
    pub fn aggregate(tx: usize, rx: usize) -> Self {
        Self {
            tx,
            rx,
            payload: Payload::Aggregate,
        }
    }
}

/// Transmissions grouped by slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    slots: Vec<Vec<Transmission>>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a transmission to 1-based `slot`, growing the schedule as needed.
    pub fn push(&mut self, slot: usize, t: Transmission) {
        assert!(slot >= 1, "slots are 1-based");
        if self.slots.len() < slot {
            self.slots.resize_with(slot, Vec::new);
        }
        self.slots[slot - 1].push(t);
    }

    /// Number of slots, trailing empty ones included.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Vec::is_empty)
    }

    /// Index of the last nonempty slot, 0 for an empty schedule.
    pub fn latency(&self) -> usize {
        self.slots.iter().rposition(|s| !s.is_empty()).map_or(0, |i| i + 1)
    }

    pub fn slot(&self, s: usize) -> &[Transmission] {
        &self.slots[s - 1]
    }

    /// `(slot, transmission)` pairs in slot order.
    pub fn transmissions(&self) -> impl Iterator<Item = (usize, &Transmission)> {
        self.slots
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |t| (i + 1, t)))
    }

    pub fn transmission_count(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    /// Extends with empty slots up to `len`.
    pub fn pad_to(&mut self, len: usize) {
        if self.slots.len() < len {
            self.slots.resize_with(len, Vec::new);
        }
    }

    /// Appends `other` after the current last slot.
    pub fn append(&mut self, other: &Schedule) {
        self.slots.extend(other.slots.iter().cloned());
    }

    /// Total energy over all transmissions.
    pub fn energy(&self, dep: &Deployment, params: &EnergyParams) -> f64 {
        let e: Vec<f64> = self
            .transmissions()
            .map(|(_, t)| dep.link_energy(t.tx, t.rx, params))
            .collect();
        pairwise_sum(&e)
    }

    /// One `slot tx rx` line per transmission; single-token payloads add the
    /// token as a fourth column.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# aggsim schedule\n");
        for (s, t) in self.transmissions() {
            match t.payload {
                Payload::Aggregate => {
                    let _ = writeln!(out, "{s} {} {}", t.tx, t.rx);
                }
                Payload::Single(tok) => {
                    let _ = writeln!(out, "{s} {} {} {tok}", t.tx, t.rx);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |m: &str| Error::parse(format!("line {}", lineno + 1), m);
            if !(3..=4).contains(&fields.len()) {
                return Err(err("expected `slot tx rx [token]`"));
            }
            let num = |f: &str| f.parse::<usize>().map_err(|_| err(&format!("bad integer `{f}`")));
            let slot = num(fields[0])?;
            if slot == 0 {
                return Err(err("slots are 1-based"));
            }
            let payload = match fields.get(3) {
                None => Payload::Aggregate,
                Some(tok) => Payload::Single(tok.parse().map_err(|_| err(&format!("bad token `{tok}`")))?),
            };
            s.push(
                slot,
                Transmission {
                    tx: num(fields[1])?,
                    rx: num(fields[2])?,
                    payload,
                },
            );
        }
        Ok(s)
    }
}

/// Optimal schedule for a tree: each node's children, sorted by decreasing
/// subtree latency, transmit in the slots right before the node's own
/// deadline, rank `i` in slot `deadline - i + 1`.
pub fn schedule_tree(t: &AggregationTree) -> Schedule {
    let (_, order) = t.latency_profile();
    let mut deadline = vec![0usize; t.len()];
    deadline[t.root()] = tree_latency(t) as usize;
    let mut s = Schedule::new();
    for v in t.bfs_order() {
        for (rank, &c) in order[v].iter().enumerate() {
            let slot = deadline[v] - rank;
            deadline[c] = slot - 1;
            s.push(slot, Transmission::aggregate(c, v));
        }
    }
    s
}

/// Schedule for a tradeoff plan.
///
/// Repairs come first, one slot each. Then one window of `1 + w_k` slots per
/// level, deepest level first; each path's hops fill the last slots of its
/// window so the parent holds the data when its own window opens.
pub fn schedule_plan(plan: &AggregationPlan) -> Result<Schedule> {
    let mut s = Schedule::new();
    for (r, rep) in plan.repairs().iter().enumerate() {
        s.push(r + 1, Transmission::aggregate(rep.node, rep.attach_to));
    }
    let mut offset = plan.repairs().len();
    let w = plan.weights();
    for k in (0..w.iterations()).rev() {
        let width = 1 + w.weight(k) as usize;
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (pi, p) in plan.levels()[k].iter().enumerate() {
            let start = offset + width - p.hops();
            for (h, hop) in p.nodes.windows(2).enumerate() {
                let slot = start + h + 1;
                for &x in hop {
                    if *owner.entry(x).or_insert(pi) != pi {
                        return Err(Error::ScheduleConflict { slot, node: x });
                    }
                }
                s.push(slot, Transmission::aggregate(hop[0], hop[1]));
            }
        }
        offset += width;
    }
    s.pad_to(offset);
    Ok(s)
}

/// A breach of the communication model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A node both sends and receives in one slot.
    HalfDuplex { slot: usize, node: usize },
    MultipleReceptions { slot: usize, node: usize },
    MultipleTransmissions { slot: usize, node: usize },
    /// A forwarded token was not held by the sender before the slot.
    Causality { slot: usize, node: usize, token: Token },
    UnknownNode { slot: usize, node: usize },
    SelfLink { slot: usize, node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::HalfDuplex { slot, node } => write!(f, "half-duplex slot={slot} node={node}"),
            Self::MultipleReceptions { slot, node } => {
                write!(f, "multiple-receptions slot={slot} node={node}")
            }
            Self::MultipleTransmissions { slot, node } => {
                write!(f, "multiple-transmissions slot={slot} node={node}")
            }
            Self::Causality { slot, node, token } => {
                write!(f, "causality slot={slot} node={node} token={token}")
            }
            Self::UnknownNode { slot, node } => write!(f, "unknown-node slot={slot} node={node}"),
            Self::SelfLink { slot, node } => write!(f, "self-link slot={slot} node={node}"),
        }
    }
}

/// All model violations found in a schedule; empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks half-duplex, single-link-per-node and causality of forwarded
/// tokens. A node may forward its own measurement at any time; any other
/// token must have arrived in an earlier slot and is consumed when sent.
pub fn validate_schedule(s: &Schedule, dep: &Deployment) -> ValidationReport {
    let n = dep.len();
    let mut report = ValidationReport::default();
    let mut held: Vec<Vec<Token>> = vec![Vec::new(); n];
    let mut sends = vec![0usize; n];
    let mut recvs = vec![0usize; n];
    let mut touched = Vec::new();
    for (i, slot) in s.slots.iter().enumerate() {
        let slot_no = i + 1;
        let mut arrivals = Vec::new();
        for t in slot {
            let mut known = true;
            for node in [t.tx, t.rx] {
                if node >= n {
                    report.violations.push(Violation::UnknownNode { slot: slot_no, node });
                    known = false;
                }
            }
            if !known {
                continue;
            }
            if t.tx == t.rx {
                report.violations.push(Violation::SelfLink { slot: slot_no, node: t.tx });
                continue;
            }
            sends[t.tx] += 1;
            recvs[t.rx] += 1;
            touched.extend([t.tx, t.rx]);
            if let Payload::Single(tok) = t.payload {
                if tok != Token::Measurement(t.tx) {
                    match held[t.tx].iter().position(|&h| h == tok) {
                        Some(pos) => {
                            held[t.tx].swap_remove(pos);
                        }
                        None => report.violations.push(Violation::Causality {
                            slot: slot_no,
                            node: t.tx,
                            token: tok,
                        }),
                    }
                }
                arrivals.push((t.rx, tok));
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for &v in &touched {
            if sends[v] > 0 && recvs[v] > 0 {
                report.violations.push(Violation::HalfDuplex { slot: slot_no, node: v });
            }
            if sends[v] > 1 {
                report.violations.push(Violation::MultipleTransmissions { slot: slot_no, node: v });
            }
            if recvs[v] > 1 {
                report.violations.push(Violation::MultipleReceptions { slot: slot_no, node: v });
            }
            sends[v] = 0;
            recvs[v] = 0;
        }
        touched.clear();
        for (rx, tok) in arrivals {
            held[rx].push(tok);
        }
    }
    report
}

/// Outcome of symbolic token-flow simulation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerificationReport {
    /// Expected tokens absent at the root.
    pub missing: Vec<Token>,
    /// Tokens reaching the root more than once, with their multiplicity.
    pub duplicated: Vec<(Token, usize)>,
    /// Tokens at the root that should not be there.
    pub unexpected: Vec<Token>,
    /// `(clique, member)` pairs whose measurement the processor lacked when
    /// computing the clique value.
    pub incomplete_cliques: Vec<(usize, usize)>,
    /// Transmissions naming nodes outside the deployment.
    pub unknown_nodes: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.missing.is_empty()
            && self.duplicated.is_empty()
            && self.unexpected.is_empty()
            && self.incomplete_cliques.is_empty()
            && self.unknown_nodes == 0
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return writeln!(f, "verified");
        }
        let list = |toks: &[Token]| toks.iter().map(Token::to_string).collect::<Vec<_>>().join(" ");
        if !self.missing.is_empty() {
            writeln!(f, "missing {}", list(&self.missing))?;
        }
        for (tok, count) in &self.duplicated {
            writeln!(f, "duplicated {tok} x{count}")?;
        }
        if !self.unexpected.is_empty() {
            writeln!(f, "unexpected {}", list(&self.unexpected))?;
        }
        for (c, v) in &self.incomplete_cliques {
            writeln!(f, "incomplete clique={c} member={v}")?;
        }
        if self.unknown_nodes > 0 {
            writeln!(f, "unknown-nodes {}", self.unknown_nodes)?;
        }
        Ok(())
    }
}

/// Simulates token flow and checks that the root ends with each expected
/// token exactly once.
///
/// For the sum function the tokens are node measurements. Otherwise they
/// are clique values: a processor computes its cliques when it first sends
/// an aggregate (the root at the end), which requires every member's
/// measurement to be in hand, and the measurements are consumed then.
pub fn verify_aggregate(s: &Schedule, spec: &FunctionSpec, root: usize) -> VerificationReport {
    let n = spec.node_count();
    let sum = spec.is_sum();
    let mut report = VerificationReport::default();
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); n];
    if !sum {
        for (c, &p) in spec.processors().iter().enumerate() {
            owned[p].push(c);
        }
    }
    let mut held: Vec<Vec<Token>> = vec![Vec::new(); n];
    let mut contributed = vec![false; n];

    // Own contribution of `v`, computed on first use.
    let contribute = |v: usize, held: &mut Vec<Token>, report: &mut VerificationReport| -> Vec<Token> {
        if sum {
            return vec![Token::Measurement(v)];
        }
        let mut out = Vec::with_capacity(owned[v].len());
        for &c in &owned[v] {
            for &m in spec.cliques().get(c) {
                if m != v && !held.contains(&Token::Measurement(m)) {
                    report.incomplete_cliques.push((c, m));
                }
            }
            out.push(Token::Clique(c));
        }
        held.retain(|t| !matches!(t, Token::Measurement(_)));
        out
    };

    for slot in &s.slots {
        let mut arrivals: Vec<(usize, Vec<Token>)> = Vec::new();
        for t in slot {
            if t.tx >= n || t.rx >= n {
                report.unknown_nodes += 1;
                continue;
            }
            let carried = match t.payload {
                Payload::Aggregate => {
                    let mut carried = std::mem::take(&mut held[t.tx]);
                    if !contributed[t.tx] {
                        contributed[t.tx] = true;
                        let own = contribute(t.tx, &mut carried, &mut report);
                        carried.extend(own);
                    }
                    carried
                }
                Payload::Single(tok) if tok == Token::Measurement(t.tx) => {
                    if sum {
                        contributed[t.tx] = true;
                    }
                    vec![tok]
                }
                Payload::Single(tok) => match held[t.tx].iter().position(|&h| h == tok) {
                    Some(pos) => vec![held[t.tx].swap_remove(pos)],
                    None => Vec::new(),
                },
            };
            arrivals.push((t.rx, carried));
        }
        for (rx, toks) in arrivals {
            held[rx].extend(toks);
        }
    }

    let mut at_root = std::mem::take(&mut held[root]);
    if !contributed[root] {
        let own = contribute(root, &mut at_root, &mut report);
        at_root.extend(own);
    }
    let mut counts: BTreeMap<Token, usize> = BTreeMap::new();
    for t in at_root {
        *counts.entry(t).or_default() += 1;
    }
    let expected: Vec<Token> = if sum {
        (0..n).map(Token::Measurement).collect()
    } else {
        (0..spec.cliques().len()).map(Token::Clique).collect()
    };
    for tok in &expected {
        match counts.remove(tok) {
            None => report.missing.push(*tok),
            Some(1) => {}
            Some(c) => report.duplicated.push((*tok, c)),
        }
    }
    report.unexpected = counts.into_keys().collect();
    report
}
