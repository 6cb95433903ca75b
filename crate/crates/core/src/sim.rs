//! Cycle-accurate replay of a [`ScheduleTrace`] on banked memories.
//!
//! Each RNS channel owns two operand arrays of `n` banks by `n` words. Every
//! bank has one read port and one write port. A bank of `n/2` twiddle
//! ROMs feeds one unit each. A group of operations issued in cycle `c`
//! reads its operands in `c`, and its results are committed in cycle
//! `c + delay_read + delay_pe + delay_write`. Commits leave the units in
//! issue order. A cell whose write is still pending cannot be read; doing
//! so is a RAW hazard. Two accesses to one bank port in the same cycle are a
//! bank conflict and cost the group one extra cycle per extra access.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Cell, LayoutKind, LayoutMap};
use crate::ntt::{
    butterfly_ct, butterfly_gs, gen_twiddles, intt_gs_in_place, ntt_ct_in_place, polymul_ntt_with,
    Polynomial, TwiddleTable,
};
use crate::rns::RnsPolynomial;
use crate::schedule::{
    build_schedule_on, check_pe_count, check_raw_bound, Array, IssueCycle, OpKind,
    PipelineConfig, ScheduleTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardPolicy {
    /// Hold issue until the blocking write commits.
    #[default]
    Stall,
    /// Abort on the first hazard.
    FailFast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimOp {
    Ntt,
    Intt,
    Polymul,
}

impl std::fmt::Display for SimOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimOp::Ntt => "ntt",
            SimOp::Intt => "intt",
            SimOp::Polymul => "polymul",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub degree: usize,
    pub npe: usize,
    pub layout: LayoutKind,
    pub pipeline: PipelineConfig,
    pub profile: String,
    pub setup_cycles: u64,
    pub hazard_policy: HazardPolicy,
}

impl SimConfig {
    pub fn new(degree: usize, npe: usize, profile: &str) -> Result<Self> {
        let config = SimConfig {
            degree,
            npe,
            layout: LayoutKind::Shifted,
            pipeline: PipelineConfig::profile(profile)?,
            profile: profile.to_string(),
            setup_cycles: 0,
            hazard_policy: HazardPolicy::Stall,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_pipeline(mut self, pipeline: PipelineConfig) -> Result<Self> {
        pipeline.validate()?;
        self.pipeline = pipeline;
        self.profile = "custom".to_string();
        Ok(self)
    }

    pub fn with_layout(mut self, layout: LayoutKind) -> Self {
        self.layout = layout;
        self
    }

    pub fn with_policy(mut self, policy: HazardPolicy) -> Self {
        self.hazard_policy = policy;
        self
    }

    pub fn layout_map(&self) -> Result<LayoutMap> {
        LayoutMap::with_kind(self.degree, self.layout)
    }

    pub fn validate(&self) -> Result<()> {
        check_pe_count(&self.layout_map()?, self.npe)?;
        self.pipeline.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardKind {
    Raw,
    ReadPortConflict,
    WritePortConflict,
}

impl std::fmt::Display for HazardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HazardKind::Raw => "RAW",
            HazardKind::ReadPortConflict => "read-port conflict",
            HazardKind::WritePortConflict => "write-port conflict",
        })
    }
}

/// One hazard. `issue` is the trace cycle of the offending group and
/// `cycle` the machine cycle (relative to the start of issue) when it was
/// observed; they coincide until the first stall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardEvent {
    pub kind: HazardKind,
    pub issue: u64,
    pub cycle: u64,
    pub array: Array,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCycles {
    pub stage: usize,
    pub first_cycle: u64,
    pub last_cycle: u64,
    pub cycles: u64,
}

/// Counters for one trace (one NTT, INTT or pointwise product).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub op: OpKind,
    pub total_cycles: u64,
    pub issue_cycles: u64,
    pub stall_cycles: u64,
    pub conflict_cycles: u64,
    /// Cycles from the first to the last issue, stalls included.
    pub active_cycles: u64,
    pub bank_conflicts: u64,
    pub twiddle_conflicts: u64,
    pub utilization: f64,
    pub per_stage: Vec<StageCycles>,
    pub hazards: Vec<HazardEvent>,
    pub predicted_cycles: Option<u64>,
}

impl PhaseReport {
    pub fn matches_prediction(&self) -> Option<bool> {
        self.predicted_cycles.map(|p| p == self.total_cycles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub op: SimOp,
    #[serde(rename = "N")]
    pub degree: usize,
    pub n_pe: usize,
    pub profile: String,
    pub layout: LayoutKind,
    pub channels: usize,
    /// Sum over the phases; channels run side by side.
    pub total_cycles: u64,
    pub stalls: u64,
    pub conflicts: u64,
    pub utilization: f64,
    pub phases: Vec<PhaseReport>,
    /// `true` when every phase with a closed-form prediction hit it exactly.
    pub matches_prediction: bool,
    #[serde(skip)]
    pub results: Vec<Polynomial>,
}

impl SimReport {
    pub fn phase(&self, op: OpKind) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.op == op)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `N·log2(N)/(2·Npe)` (or `N/Npe` for the product) plus the fixed latency.
pub fn predicted_cycles(
    degree: usize,
    npe: usize,
    pipeline: &PipelineConfig,
    setup_cycles: u64,
    op: OpKind,
) -> Result<u64> {
    let layout = LayoutMap::new(degree)?;
    let bound = check_raw_bound(&layout, npe, pipeline, op)?;
    if !bound.satisfied {
        return Err(Error::BoundViolated {
            delay: bound.delay,
            bound: bound.bound.unwrap_or_default(),
        });
    }
    let (n, p) = (degree as u64, npe as u64);
    let issue = match op {
        OpKind::Mult => n / p,
        OpKind::Ntt | OpKind::Intt => n * n.trailing_zeros() as u64 / (2 * p),
    };
    Ok(issue + pipeline.total(op) + setup_cycles)
}

/// Static findings of [`detect_hazards`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardReport {
    pub findings: Vec<HazardEvent>,
}

impl HazardReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, kind: HazardKind) -> usize {
        self.findings.iter().filter(|f| f.kind == kind).count()
    }
}

/// Port-conflict events of one issue group; shared by the static and the
/// dynamic analysis so both use the same rule.
fn port_conflicts(group: &IssueCycle, cycle: u64) -> (Vec<HazardEvent>, u64) {
    let mut events = Vec::new();
    let mut penalty = 0;
    for (kind, accesses) in [
        (
            HazardKind::ReadPortConflict,
            group.ops.iter().flat_map(|o| o.reads.iter()).collect::<Vec<_>>(),
        ),
        (
            HazardKind::WritePortConflict,
            group.ops.iter().flat_map(|o| o.writes.iter()).collect(),
        ),
    ] {
        let mut uses: HashMap<(Array, usize), u64> = HashMap::new();
        for a in accesses {
            let count = uses.entry((a.array, a.cell.bank)).or_default();
            *count += 1;
            if *count > 1 {
                events.push(HazardEvent {
                    kind,
                    issue: group.cycle,
                    cycle,
                    array: a.array,
                    cell: a.cell,
                });
            }
        }
        penalty = penalty.max(uses.values().max().copied().unwrap_or(1) - 1);
    }
    (events, penalty)
}

/// Analyses a trace on its nominal timeline without moving any data.
pub fn detect_hazards(trace: &ScheduleTrace, pipeline: &PipelineConfig) -> HazardReport {
    let latency = pipeline.total(trace.kind);
    let n = trace.layout.width();
    let mut ready = [vec![0u64; n * n], vec![0u64; n * n]];
    let mut findings = Vec::new();
    for group in &trace.cycles {
        let c = group.cycle;
        for op in &group.ops {
            for r in &op.reads {
                if ready[slot(r.array)][cell_slot(r.cell, n)] > c {
                    findings.push(HazardEvent {
                        kind: HazardKind::Raw,
                        issue: c,
                        cycle: c,
                        array: r.array,
                        cell: r.cell,
                    });
                }
            }
        }
        findings.extend(port_conflicts(group, c).0);
        for op in &group.ops {
            for w in &op.writes {
                ready[slot(w.array)][cell_slot(w.cell, n)] = c + latency + 1;
            }
        }
    }
    HazardReport { findings }
}

fn slot(array: Array) -> usize {
    match array {
        Array::Main => 0,
        Array::Aux => 1,
    }
}

fn cell_slot(cell: Cell, n: usize) -> usize {
    cell.address * n + cell.bank
}

/// `n` banks of depth `n` with a per-cell ready cycle.
#[derive(Debug, Clone)]
pub struct BankedMemory {
    layout: LayoutMap,
    words: Vec<u64>,
    ready: Vec<u64>,
}

impl BankedMemory {
    pub fn new(layout: LayoutMap) -> Self {
        let size = layout.degree();
        BankedMemory {
            layout,
            words: vec![0; size],
            ready: vec![0; size],
        }
    }

    /// Stores coefficients at their layout positions.
    pub fn load(&mut self, coeffs: &[u64]) {
        let n = self.layout.width();
        for (i, &c) in coeffs.iter().enumerate() {
            self.words[cell_slot(self.layout.cell(i), n)] = c;
        }
        self.ready.fill(0);
    }

    /// Reads coefficients back in index order.
    pub fn unload(&self) -> Vec<u64> {
        let n = self.layout.width();
        (0..self.layout.degree())
            .map(|i| self.words[cell_slot(self.layout.cell(i), n)])
            .collect()
    }

    fn read(&self, cell: Cell) -> u64 {
        self.words[cell_slot(cell, self.layout.width())]
    }

    fn write(&mut self, cell: Cell, value: u64) {
        let n = self.layout.width();
        self.words[cell_slot(cell, n)] = value;
    }

    fn ready_at(&self, cell: Cell) -> u64 {
        self.ready[cell_slot(cell, self.layout.width())]
    }

    fn reserve(&mut self, cell: Cell, cycle: u64) {
        let n = self.layout.width();
        self.ready[cell_slot(cell, n)] = cycle;
    }

    /// All ready cycles back to zero, leaving the data in place.
    fn settle(&mut self) {
        self.ready.fill(0);
    }
}

/// Read-only twiddle storage: one bank per processing element.
#[derive(Debug, Clone)]
struct TwiddleMemory {
    banks: usize,
    table: Vec<u64>,
}

impl TwiddleMemory {
    fn new(banks: usize, table: &[u64]) -> Self {
        TwiddleMemory {
            banks,
            table: table.to_vec(),
        }
    }

    fn read(&self, bank: usize, index: usize) -> u64 {
        debug_assert!(bank < self.banks);
        self.table[index]
    }
}

struct InFlight {
    commit: u64,
    /// (physical array, cell, value)
    writes: Vec<(usize, Cell, u64)>,
}

/// Configurable butterfly units of one channel: an in-order pipeline.
#[derive(Default)]
struct CbuArray {
    in_flight: VecDeque<InFlight>,
}

impl CbuArray {
    fn push(&mut self, op: InFlight) {
        debug_assert!(self.in_flight.back().map_or(true, |b| b.commit <= op.commit));
        self.in_flight.push_back(op);
    }

    fn retire(&mut self, now: u64, memories: &mut [BankedMemory; 2]) {
        while self.in_flight.front().is_some_and(|f| f.commit <= now) {
            let done = self.in_flight.pop_front().expect("front exists");
            debug_assert_eq!(done.commit, now);
            for (array, cell, value) in done.writes {
                memories[array].write(cell, value);
            }
        }
    }

    fn is_idle(&self) -> bool {
        self.in_flight.is_empty()
    }
}

struct Channel<'a> {
    config: &'a SimConfig,
    twiddles: TwiddleTable,
    memories: [BankedMemory; 2],
    cbu: CbuArray,
}

impl<'a> Channel<'a> {
    fn new(config: &'a SimConfig, layout: LayoutMap, twiddles: TwiddleTable) -> Self {
        Channel {
            config,
            twiddles,
            memories: [BankedMemory::new(layout), BankedMemory::new(layout)],
            cbu: CbuArray::default(),
        }
    }

    /// Replays one trace. `main` selects which physical array plays the
    /// trace's main role.
    fn execute(&mut self, trace: &ScheduleTrace, main: usize) -> Result<PhaseReport> {
        let kind = trace.kind;
        let latency = self.config.pipeline.total(kind);
        let setup = self.config.setup_cycles;
        let modulus = self.twiddles.modulus.clone();
        let rom = match kind {
            OpKind::Ntt => Some(TwiddleMemory::new(
                trace.layout.width() / 2,
                &self.twiddles.forward,
            )),
            OpKind::Intt => Some(TwiddleMemory::new(
                trace.layout.width() / 2,
                &self.twiddles.inverse,
            )),
            OpKind::Mult => None,
        };
        let physical = |array: Array| match array {
            Array::Main => main,
            Array::Aux => 1 - main,
        };
        for m in &mut self.memories {
            m.settle();
        }

        let mut now = 0u64;
        let mut stall_cycles = 0;
        let mut conflict_cycles = 0;
        let mut bank_conflicts = 0;
        let mut twiddle_conflicts = 0;
        let mut hazards = Vec::new();
        let mut per_stage: Vec<StageCycles> = Vec::new();
        let mut first_issue = None;
        let mut last_issue = 0;
        let mut groups = trace.cycles.iter().peekable();
        let mut reported_stall_for = None;

        while groups.peek().is_some() || !self.cbu.is_idle() {
            if let Some(group) = groups.peek() {
                let blocking: Vec<_> = group
                    .ops
                    .iter()
                    .flat_map(|o| o.reads.iter())
                    .filter(|r| self.memories[physical(r.array)].ready_at(r.cell) > now)
                    .collect();
                if !blocking.is_empty() {
                    if reported_stall_for != Some(group.cycle) {
                        reported_stall_for = Some(group.cycle);
                        for r in &blocking {
                            let event = HazardEvent {
                                kind: HazardKind::Raw,
                                issue: group.cycle,
                                cycle: now,
                                array: r.array,
                                cell: r.cell,
                            };
                            if self.config.hazard_policy == HazardPolicy::FailFast {
                                return Err(hazard_error(&event));
                            }
                            hazards.push(event);
                        }
                    }
                    stall_cycles += 1;
                } else {
                    let (events, penalty) = port_conflicts(group, now);
                    if let Some(first) = events.first() {
                        if self.config.hazard_policy == HazardPolicy::FailFast {
                            return Err(hazard_error(first));
                        }
                    }
                    bank_conflicts += events.len() as u64;
                    hazards.extend(events);
                    conflict_cycles += penalty;

                    let mut twiddle_banks = vec![false; trace.layout.width() / 2];
                    // conflicting accesses are serialized; the group completes
                    // in its last occupied cycle
                    let issue_at = now + penalty;
                    let commit = issue_at + latency;
                    let mut writes = Vec::with_capacity(2 * group.ops.len());
                    for op in &group.ops {
                        let x = self.memories[physical(op.reads[0].array)].read(op.reads[0].cell);
                        let y = self.memories[physical(op.reads[1].array)].read(op.reads[1].cell);
                        let values = match (kind, &rom, op.twiddle) {
                            (OpKind::Mult, _, _) => [modulus.mul_hw(x, y), 0],
                            (_, Some(rom), Some(t)) => {
                                if std::mem::replace(&mut twiddle_banks[op.pe], true) {
                                    twiddle_conflicts += 1;
                                }
                                let w = rom.read(op.pe, t);
                                let (u, v) = if kind == OpKind::Ntt {
                                    butterfly_ct(x, y, w, &modulus)
                                } else {
                                    butterfly_gs(x, y, w, &modulus)
                                };
                                [u, v]
                            }
                            _ => unreachable!("transform issue without a twiddle"),
                        };
                        for (w, value) in op.writes.iter().zip(values) {
                            self.memories[physical(w.array)].reserve(w.cell, commit + 1);
                            writes.push((physical(w.array), w.cell, value));
                        }
                    }
                    self.cbu.push(InFlight { commit, writes });

                    let stage = group.ops[0].stage;
                    match per_stage.last_mut() {
                        Some(s) if s.stage == stage => {
                            s.last_cycle = issue_at;
                            s.cycles = issue_at - s.first_cycle + 1;
                        }
                        _ => per_stage.push(StageCycles {
                            stage,
                            first_cycle: now,
                            last_cycle: issue_at,
                            cycles: issue_at - now + 1,
                        }),
                    }
                    first_issue.get_or_insert(now);
                    last_issue = issue_at;
                    while now < issue_at {
                        self.cbu.retire(now, &mut self.memories);
                        now += 1;
                    }
                    groups.next();
                }
            }
            self.cbu.retire(now, &mut self.memories);
            now += 1;
        }

        let active_cycles = last_issue - first_issue.unwrap_or(0) + 1;
        let utilization = trace.operations() as f64 / (active_cycles * trace.npe as u64) as f64;
        let predicted = predicted_cycles(
            trace.degree(),
            trace.npe,
            &self.config.pipeline,
            setup,
            kind,
        )
        .ok();
        Ok(PhaseReport {
            op: kind,
            total_cycles: now + setup,
            issue_cycles: trace.issue_cycles(),
            stall_cycles,
            conflict_cycles,
            active_cycles,
            bank_conflicts,
            twiddle_conflicts,
            utilization,
            per_stage,
            hazards,
            predicted_cycles: predicted,
        })
    }
}

fn hazard_error(event: &HazardEvent) -> Error {
    Error::Hazard {
        kind: event.kind.to_string(),
        cycle: event.cycle,
        bank: event.cell.bank,
        address: event.cell.address,
    }
}

struct ChannelOutcome {
    phases: Vec<PhaseReport>,
    result: Polynomial,
}

fn run_channel(
    config: &SimConfig,
    traces: &[(OpKind, ScheduleTrace)],
    op: SimOp,
    a: &Polynomial,
    b: Option<&Polynomial>,
) -> Result<ChannelOutcome> {
    let layout = config.layout_map()?;
    let twiddles = gen_twiddles(a.modulus(), config.degree)?;
    let trace = |kind: OpKind| {
        &traces
            .iter()
            .find(|(k, _)| *k == kind)
            .expect("trace built for every phase")
            .1
    };
    let mut channel = Channel::new(config, layout, twiddles.clone());
    channel.memories[0].load(a.coeffs());

    let mut phases = Vec::new();
    let mut expected = a.coeffs().to_vec();
    match op {
        SimOp::Ntt => {
            phases.push(channel.execute(trace(OpKind::Ntt), 0)?);
            ntt_ct_in_place(&mut expected, &twiddles)?;
        }
        SimOp::Intt => {
            phases.push(channel.execute(trace(OpKind::Intt), 0)?);
            intt_gs_in_place(&mut expected, &twiddles)?;
        }
        SimOp::Polymul => {
            let b = b.ok_or_else(|| Error::Parse("polymul needs a second operand".into()))?;
            channel.memories[1].load(b.coeffs());
            phases.push(channel.execute(trace(OpKind::Ntt), 0)?);
            phases.push(channel.execute(trace(OpKind::Ntt), 1)?);
            phases.push(channel.execute(trace(OpKind::Mult), 0)?);
            phases.push(channel.execute(trace(OpKind::Intt), 0)?);
            expected = polymul_ntt_with(a, b, &twiddles)?.into_coeffs();
        }
    }
    let got = channel.memories[0].unload();
    if let Some(index) = got.iter().zip(&expected).position(|(g, e)| g != e) {
        return Err(Error::ResultMismatch { index });
    }
    Ok(ChannelOutcome {
        phases,
        result: Polynomial::new(got, a.modulus().clone())?,
    })
}

/// Simulates `op` on every RNS channel of `a` (and `b` for products).
pub fn run(
    config: &SimConfig,
    a: &RnsPolynomial,
    b: Option<&RnsPolynomial>,
    op: SimOp,
) -> Result<SimReport> {
    config.validate()?;
    if a.degree() != config.degree {
        return Err(Error::LengthMismatch {
            expected: config.degree,
            got: a.degree(),
        });
    }
    if let Some(b) = b {
        if b.channels() != a.channels() {
            return Err(Error::InvalidBasis(format!(
                "operands have {} and {} channels",
                a.channels(),
                b.channels()
            )));
        }
        for (x, y) in a.residues().iter().zip(b.residues()) {
            if x.modulus().q() != y.modulus().q() {
                return Err(Error::ModulusMismatch(x.modulus().q(), y.modulus().q()));
            }
            if y.len() != config.degree {
                return Err(Error::LengthMismatch {
                    expected: config.degree,
                    got: y.len(),
                });
            }
        }
    }
    for p in a.residues() {
        if !p.modulus().supports_hw() {
            return Err(Error::StepWidthTooNarrow {
                k: p.modulus().k(),
                width: p.modulus().step_width().bits(),
            });
        }
    }

    let layout = config.layout_map()?;
    let kinds: &[OpKind] = match op {
        SimOp::Ntt => &[OpKind::Ntt],
        SimOp::Intt => &[OpKind::Intt],
        SimOp::Polymul => &[OpKind::Ntt, OpKind::Mult, OpKind::Intt],
    };
    let traces = kinds
        .iter()
        .map(|&k| Ok((k, build_schedule_on(layout, config.npe, k)?)))
        .collect::<Result<Vec<_>>>()?;

    // channels are independent machines
    let outcomes: Vec<Result<ChannelOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = a
            .residues()
            .iter()
            .enumerate()
            .map(|(i, pa)| {
                let pb = b.map(|b| &b.residues()[i]);
                let traces = &traces;
                scope.spawn(move || run_channel(config, traces, op, pa, pb))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("channel thread panicked"))
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    // timing does not depend on the data, so every channel reports the same counters
    let phases = outcomes[0].phases.clone();
    debug_assert!(outcomes.iter().all(|o| o
        .phases
        .iter()
        .zip(&phases)
        .all(|(x, y)| x.total_cycles == y.total_cycles)));

    let total_cycles = phases.iter().map(|p| p.total_cycles).sum();
    let stalls = phases.iter().map(|p| p.stall_cycles).sum();
    let conflicts = phases.iter().map(|p| p.bank_conflicts).sum();
    let issue: u64 = phases.iter().map(|p| p.issue_cycles).sum();
    let active: u64 = phases.iter().map(|p| p.active_cycles).sum();
    let matches_prediction = phases
        .iter()
        .all(|p| p.matches_prediction().unwrap_or(false));

    Ok(SimReport {
        op,
        degree: config.degree,
        n_pe: config.npe,
        profile: config.profile.clone(),
        layout: config.layout,
        channels: outcomes.len(),
        total_cycles,
        stalls,
        conflicts,
        utilization: issue as f64 / active as f64,
        phases,
        matches_prediction,
        results: outcomes.into_iter().map(|o| o.result).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::{find_ntt_prime, Modulus};
    use crate::ntt::{polymul_ntt, schoolbook_negacyclic};
    use crate::schedule::{build_schedule, min_dependency_distance};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn random_poly(seed: u64, n: usize, md: &Modulus) -> Polynomial {
        let mut rng = SplitMix64::seed_from_u64(seed);
        Polynomial::new((0..n).map(|_| rng.gen_range(0..md.q())).collect(), md.clone()).unwrap()
    }

    fn modulus(bits: u32, n: usize) -> Modulus {
        Modulus::for_ntt(find_ntt_prime(bits, n, 0).unwrap(), n).unwrap()
    }

    #[test]
    fn headline_row() {
        let md = modulus(32, 4096);
        let a = RnsPolynomial::single(random_poly(1, 4096, &md));
        let config = SimConfig::new(4096, 32, "q32").unwrap();
        let report = run(&config, &a, None, SimOp::Ntt).unwrap();
        assert_eq!(report.total_cycles, 787);
        assert_eq!((report.stalls, report.conflicts), (0, 0));
        assert_eq!(report.utilization, 1.0);
        assert!(report.matches_prediction);
        assert_eq!(report.phases[0].per_stage.len(), 12);
        assert!(report.phases[0].per_stage.iter().all(|s| s.cycles == 64));
    }

    #[test]
    fn polymul_small_matches_schoolbook() {
        let md = modulus(14, 16);
        let a = random_poly(2, 16, &md);
        let b = random_poly(3, 16, &md);
        let config = SimConfig::new(16, 2, "ideal").unwrap();
        let report = run(
            &config,
            &RnsPolynomial::single(a.clone()),
            Some(&RnsPolynomial::single(b.clone())),
            SimOp::Polymul,
        )
        .unwrap();
        assert_eq!(report.results[0], schoolbook_negacyclic(&a, &b).unwrap());
        assert_eq!(report.phases.len(), 4);
        assert_eq!(report.stalls, 0);
    }

    #[test]
    fn deep_pipeline_stalls_but_stays_correct() {
        let md = modulus(32, 16);
        let a = random_poly(4, 16, &md);
        let b = random_poly(5, 16, &md);
        let config = SimConfig::new(16, 2, "q32").unwrap();
        let report = run(
            &config,
            &RnsPolynomial::single(a.clone()),
            Some(&RnsPolynomial::single(b.clone())),
            SimOp::Polymul,
        )
        .unwrap();
        assert!(report.stalls > 0);
        assert_eq!(report.conflicts, 0);
        assert_eq!(report.results[0], polymul_ntt(&a, &b).unwrap());
        assert!(!report.matches_prediction);
        assert!(predicted_cycles(16, 2, &config.pipeline, 0, OpKind::Ntt).is_err());
    }

    #[test]
    fn fail_fast_reports_first_static_finding() {
        let md = modulus(32, 16);
        let a = RnsPolynomial::single(random_poly(6, 16, &md));
        let config = SimConfig::new(16, 2, "q32")
            .unwrap()
            .with_policy(HazardPolicy::FailFast);
        let err = run(&config, &a, None, SimOp::Ntt).unwrap_err();
        let trace = build_schedule(16, 2, OpKind::Ntt).unwrap();
        let first = detect_hazards(&trace, &config.pipeline).findings[0];
        assert_eq!(
            err,
            Error::Hazard {
                kind: "RAW".into(),
                cycle: first.cycle,
                bank: first.cell.bank,
                address: first.cell.address
            }
        );
    }

    #[test]
    fn sequential_layout_conflicts_match_static_analysis() {
        let md = modulus(32, 16);
        let a = RnsPolynomial::single(random_poly(7, 16, &md));
        let config = SimConfig::new(16, 2, "ideal")
            .unwrap()
            .with_layout(LayoutKind::Sequential);
        let report = run(&config, &a, None, SimOp::Ntt).unwrap();
        assert!(report.conflicts > 0);
        assert!(!report.matches_prediction);
        let trace = build_schedule_on(config.layout_map().unwrap(), 2, OpKind::Ntt).unwrap();
        let stat = detect_hazards(&trace, &config.pipeline);
        let key = |e: &HazardEvent| (e.kind, e.issue, e.array, e.cell);
        let dynamic: Vec<_> = report.phases[0].hazards.iter().map(key).collect();
        let fixed: Vec<_> = stat.findings.iter().map(key).collect();
        assert_eq!(dynamic, fixed);
        assert_eq!(report.results[0].coeffs(), {
            let mut v = a.residues()[0].coeffs().to_vec();
            let tw = gen_twiddles(&md, 16).unwrap();
            ntt_ct_in_place(&mut v, &tw).unwrap();
            v
        });
    }

    #[test]
    fn raw_findings_follow_the_bound() {
        for (degree, npe) in [(64usize, 2usize), (256, 4), (256, 8)] {
            for kind in [OpKind::Ntt, OpKind::Intt] {
                let trace = build_schedule(degree, npe, kind).unwrap();
                let gap = min_dependency_distance(&trace).unwrap();
                let base = PipelineConfig::ideal();
                // latency just below and exactly at the dependency distance
                let below = base.deepened(gap - 1 - base.total(kind));
                let at = base.deepened(gap - base.total(kind));
                assert!(detect_hazards(&trace, &below).is_empty());
                let findings = detect_hazards(&trace, &at);
                assert!(findings.count(HazardKind::Raw) > 0);
                assert_eq!(findings.count(HazardKind::ReadPortConflict), 0);
            }
        }
    }

    #[test]
    fn intt_is_one_cycle_longer() {
        let md = modulus(32, 4096);
        let a = RnsPolynomial::single(random_poly(8, 4096, &md));
        let config = SimConfig::new(4096, 16, "q32").unwrap();
        let ntt = run(&config, &a, None, SimOp::Ntt).unwrap();
        let intt = run(&config, &a, None, SimOp::Intt).unwrap();
        assert_eq!(ntt.total_cycles, 1555);
        assert_eq!(intt.total_cycles, 1556);
    }

    #[test]
    fn setup_cycles_add_linearly() {
        let md = modulus(32, 256);
        let a = RnsPolynomial::single(random_poly(9, 256, &md));
        let mut config = SimConfig::new(256, 2, "q32").unwrap();
        let base = run(&config, &a, None, SimOp::Ntt).unwrap().total_cycles;
        config.setup_cycles = 7;
        let report = run(&config, &a, None, SimOp::Ntt).unwrap();
        assert_eq!(report.total_cycles, base + 7);
        assert!(report.matches_prediction);
    }

    #[test]
    fn predictions() {
        let q32 = PipelineConfig::q32();
        assert_eq!(predicted_cycles(4096, 4, &q32, 0, OpKind::Ntt), Ok(6163));
        assert_eq!(predicted_cycles(4096, 4, &q32, 0, OpKind::Intt), Ok(6164));
        assert_eq!(predicted_cycles(4096, 4, &q32, 0, OpKind::Mult), Ok(1042));
        assert_eq!(
            predicted_cycles(1024, 16, &PipelineConfig::q14(), 0, OpKind::Ntt),
            Ok(335)
        );
        // a zero-latency machine still needs one cycle per issue
        let ideal = PipelineConfig::new(0, 0, 0, 1, 0).unwrap();
        assert_eq!(
            predicted_cycles(4096, 8, &ideal, 0, OpKind::Ntt),
            Ok(3072)
        );
    }

    #[test]
    fn input_validation() {
        let md = modulus(32, 64);
        let a = RnsPolynomial::single(random_poly(10, 64, &md));
        let config = SimConfig::new(256, 4, "q32").unwrap();
        assert!(run(&config, &a, None, SimOp::Ntt).is_err());
        let config = SimConfig::new(64, 4, "q32").unwrap();
        assert!(run(&config, &a, None, SimOp::Polymul).is_err());
        assert!(SimConfig::new(64, 8, "q32").is_err());
        assert!(SimConfig::new(128, 4, "q32").is_err());
    }

    #[test]
    fn report_json_shape() {
        let md = modulus(32, 16);
        let a = RnsPolynomial::single(random_poly(11, 16, &md));
        let report = run(&SimConfig::new(16, 1, "ideal").unwrap(), &a, None, SimOp::Ntt).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["op", "N", "n_pe", "profile", "total_cycles", "stalls", "conflicts", "utilization"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["phases"][0]["per_stage"].is_array());
    }
}
