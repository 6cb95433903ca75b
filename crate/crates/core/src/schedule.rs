//! Cycle-by-cycle access schedule for the banked transform.
//!
//! A transform over `N = n²` coefficients runs in two phases of
//! `log2(n)` stages each.
//!
//! * Phase 0 pairs `i` with `i + N/2^(s+1)`. Stage `s` is split into `2^s`
//!   rounds covering the address range `[r·N/2^s, (r+1)·N/2^s)`. Every
//!   full-rate cycle reads a composite diagonal: `2^s` column segments of
//!   `n/2^s` rows, spaced `n/2^s` columns apart. Under the shifted layout a
//!   column segment of length `L` starting at row `r0` covers banks
//!   `c + r0 .. c + r0 + L`, so the segments tile all `n` banks.
//! * Phase 1 pairs `i` with `i + 2^t` for `2^t < n`. Both operands share a
//!   row, and every full-rate cycle reads one row.
//!
//! A full-rate cycle holds `n/2` butterflies. With `Npe < n/2` units it is
//! issued over `n/(2·Npe)` cycles in a fixed order. Results go back to the
//! cells they were read from. The inverse transform runs the same stage
//! patterns in reverse order. The pointwise product streams rows of the two
//! operand arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Cell, LayoutMap};
use crate::ntt::twiddle_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Ntt,
    Intt,
    Mult,
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OpKind::Ntt => "ntt",
            OpKind::Intt => "intt",
            OpKind::Mult => "mult",
        })
    }
}

/// Latencies of the memory ports and of the butterfly pipeline, in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub delay_read: u64,
    pub delay_write: u64,
    pub delay_pe_ntt: u64,
    pub delay_pe_intt: u64,
    pub delay_pe_mult: u64,
}

impl PipelineConfig {
    /// The inverse butterfly carries one extra halving stage, so its depth
    /// must be exactly one more than the forward butterfly's.
    pub fn new(
        delay_read: u64,
        delay_write: u64,
        delay_pe_ntt: u64,
        delay_pe_intt: u64,
        delay_pe_mult: u64,
    ) -> Result<Self> {
        let config = PipelineConfig {
            delay_read,
            delay_write,
            delay_pe_ntt,
            delay_pe_intt,
            delay_pe_mult,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_pe_intt != self.delay_pe_ntt + 1 {
            return Err(Error::InvalidPipeline(format!(
                "INTT butterfly depth {} must be NTT depth {} plus one",
                self.delay_pe_intt, self.delay_pe_ntt
            )));
        }
        Ok(())
    }

    /// 32-bit datapath: totals 19 (NTT), 20 (INTT), 18 (Mult).
    pub const fn q32() -> Self {
        PipelineConfig {
            delay_read: 2,
            delay_write: 2,
            delay_pe_ntt: 15,
            delay_pe_intt: 16,
            delay_pe_mult: 14,
        }
    }

    /// 14-bit datapath: totals 15 (NTT), 16 (INTT), 14 (Mult).
    pub const fn q14() -> Self {
        PipelineConfig {
            delay_read: 2,
            delay_write: 2,
            delay_pe_ntt: 11,
            delay_pe_intt: 12,
            delay_pe_mult: 10,
        }
    }

    /// No latency at all.
    pub const fn ideal() -> Self {
        PipelineConfig {
            delay_read: 0,
            delay_write: 0,
            delay_pe_ntt: 0,
            delay_pe_intt: 1,
            delay_pe_mult: 0,
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "q32" => Ok(Self::q32()),
            "q14" => Ok(Self::q14()),
            "ideal" => Ok(Self::ideal()),
            other => Err(Error::InvalidPipeline(format!(
                "unknown profile `{other}` (expected q32, q14 or ideal)"
            ))),
        }
    }

    pub fn delay_pe(&self, kind: OpKind) -> u64 {
        match kind {
            OpKind::Ntt => self.delay_pe_ntt,
            OpKind::Intt => self.delay_pe_intt,
            OpKind::Mult => self.delay_pe_mult,
        }
    }

    /// Read + butterfly + write latency for one operation.
    pub fn total(&self, kind: OpKind) -> u64 {
        self.delay_read + self.delay_write + self.delay_pe(kind)
    }

    /// A copy with the butterfly depths raised by `extra` cycles.
    pub fn deepened(&self, extra: u64) -> Self {
        PipelineConfig {
            delay_pe_ntt: self.delay_pe_ntt + extra,
            delay_pe_intt: self.delay_pe_intt + extra,
            delay_pe_mult: self.delay_pe_mult + extra,
            ..*self
        }
    }
}

/// Which operand array an access targets. Transforms only touch `Main`;
/// the pointwise product also reads `Aux`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Array {
    Main,
    Aux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub array: Array,
    pub index: usize,
    pub cell: Cell,
}

/// One operation handed to one processing element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub pe: usize,
    pub stage: usize,
    pub round: usize,
    pub reads: [Access; 2],
    /// Butterflies write both operands back; the pointwise product writes
    /// only the first.
    pub writes: Vec<Access>,
    pub twiddle: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueCycle {
    pub cycle: u64,
    pub ops: Vec<Issue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInfo {
    pub stage: usize,
    pub phase: u8,
    /// Pair distance; 0 for the pointwise product.
    pub gap: usize,
    pub rounds: usize,
    pub first_cycle: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTrace {
    pub kind: OpKind,
    pub layout: LayoutMap,
    pub npe: usize,
    pub stages: Vec<StageInfo>,
    pub cycles: Vec<IssueCycle>,
}

impl ScheduleTrace {
    pub fn degree(&self) -> usize {
        self.layout.degree()
    }

    pub fn issue_cycles(&self) -> u64 {
        self.cycles.len() as u64
    }

    pub fn operations(&self) -> usize {
        self.cycles.iter().map(|c| c.ops.len()).sum()
    }
}

/// Valid processing element counts: powers of two from 1 to `n/2`.
pub fn check_pe_count(layout: &LayoutMap, npe: usize) -> Result<()> {
    let max = layout.width() / 2;
    if npe == 0 || !npe.is_power_of_two() || npe > max {
        return Err(Error::InvalidPeCount {
            npe,
            n: layout.degree(),
            max,
        });
    }
    Ok(())
}

/// Schedule on the shifted layout.
pub fn build_schedule(degree: usize, npe: usize, kind: OpKind) -> Result<ScheduleTrace> {
    build_schedule_on(LayoutMap::new(degree)?, npe, kind)
}

/// Schedule on an arbitrary layout; the issue order does not depend on it.
pub fn build_schedule_on(layout: LayoutMap, npe: usize, kind: OpKind) -> Result<ScheduleTrace> {
    check_pe_count(&layout, npe)?;
    let mut builder = Builder {
        layout,
        npe,
        stages: Vec::new(),
        cycles: Vec::new(),
    };
    match kind {
        OpKind::Mult => builder.pointwise(),
        OpKind::Ntt | OpKind::Intt => {
            let h = layout.width().trailing_zeros() as usize;
            let mut patterns: Vec<StagePattern> = (0..h)
                .map(StagePattern::Diagonal)
                .chain((0..h).rev().map(StagePattern::Row))
                .collect();
            if kind == OpKind::Intt {
                patterns.reverse();
            }
            for (stage, pattern) in patterns.into_iter().enumerate() {
                builder.transform_stage(stage, pattern);
            }
        }
    }
    Ok(ScheduleTrace {
        kind,
        layout,
        npe,
        stages: builder.stages,
        cycles: builder.cycles,
    })
}

#[derive(Debug, Clone, Copy)]
enum StagePattern {
    /// Phase 0, forward stage `s`.
    Diagonal(usize),
    /// Phase 1, pair distance `2^t`.
    Row(usize),
}

struct Builder {
    layout: LayoutMap,
    npe: usize,
    stages: Vec<StageInfo>,
    cycles: Vec<IssueCycle>,
}

impl Builder {
    fn access(&self, array: Array, index: usize) -> Access {
        Access {
            array,
            index,
            cell: self.layout.cell(index),
        }
    }

    /// Splits one full-rate group into issue cycles of `npe` operations.
    fn emit(&mut self, stage: usize, round: usize, group: &[(usize, usize)], gap: usize) {
        let n = self.layout.degree();
        for chunk in group.chunks(self.npe) {
            let ops = chunk
                .iter()
                .enumerate()
                .map(|(pe, &(lower, upper))| {
                    let (a, b) = (self.access(Array::Main, lower), self.access(Array::Main, upper));
                    Issue {
                        pe,
                        stage,
                        round,
                        reads: [a, b],
                        writes: vec![a, b],
                        twiddle: Some(twiddle_index(n, gap, lower)),
                    }
                })
                .collect();
            let cycle = self.cycles.len() as u64;
            self.cycles.push(IssueCycle { cycle, ops });
        }
    }

    fn transform_stage(&mut self, stage: usize, pattern: StagePattern) {
        let n = self.layout.width();
        let degree = self.layout.degree();
        let first_cycle = self.cycles.len() as u64;
        let (phase, gap, rounds) = match pattern {
            StagePattern::Diagonal(s) => {
                let gap = degree >> (s + 1);
                let rows = n >> s;
                let rounds = 1usize << s;
                for round in 0..rounds {
                    for j in 0..rows {
                        let mut group = Vec::with_capacity(n / 2);
                        for segment in 0..rounds {
                            let column = j + segment * rows;
                            for row in round * rows..(round + 1) * rows {
                                let i = row * n + column;
                                if (i / gap) % 2 == 0 {
                                    group.push((i, i + gap));
                                }
                            }
                        }
                        debug_assert_eq!(group.len(), n / 2);
                        self.emit(stage, round, &group, gap);
                    }
                }
                (0, gap, rounds)
            }
            StagePattern::Row(t) => {
                let gap = 1usize << t;
                for row in 0..n {
                    let group: Vec<(usize, usize)> = (0..n)
                        .filter(|c| (c / gap) % 2 == 0)
                        .map(|c| (row * n + c, row * n + c + gap))
                        .collect();
                    self.emit(stage, row, &group, gap);
                }
                (1, gap, n)
            }
        };
        self.stages.push(StageInfo {
            stage,
            phase,
            gap,
            rounds,
            first_cycle,
            cycles: self.cycles.len() as u64 - first_cycle,
        });
    }

    fn pointwise(&mut self) {
        let n = self.layout.width();
        let degree = self.layout.degree();
        for start in (0..degree).step_by(self.npe) {
            let ops = (0..self.npe)
                .map(|pe| {
                    let i = start + pe;
                    let main = self.access(Array::Main, i);
                    Issue {
                        pe,
                        stage: 0,
                        round: i / n,
                        reads: [main, self.access(Array::Aux, i)],
                        writes: vec![main],
                        twiddle: None,
                    }
                })
                .collect();
            let cycle = self.cycles.len() as u64;
            self.cycles.push(IssueCycle { cycle, ops });
        }
        self.stages.push(StageInfo {
            stage: 0,
            phase: 1,
            gap: 0,
            rounds: n,
            first_cycle: 0,
            cycles: self.cycles.len() as u64,
        });
    }
}

/// RAW headroom of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: OpKind,
    /// Issue cycles between a result's producer and its earliest consumer;
    /// `None` when the operation has no read-after-write dependencies.
    pub bound: Option<u64>,
    pub delay: u64,
    pub slack: Option<i64>,
    pub satisfied: bool,
}

/// The pipeline latency must stay strictly below `(n/2)·(n/(2·Npe))`.
pub fn check_raw_bound(
    layout: &LayoutMap,
    npe: usize,
    pipeline: &PipelineConfig,
    kind: OpKind,
) -> Result<BoundReport> {
    check_pe_count(layout, npe)?;
    let delay = pipeline.total(kind);
    if kind == OpKind::Mult {
        return Ok(BoundReport {
            kind,
            bound: None,
            delay,
            slack: None,
            satisfied: true,
        });
    }
    let n = layout.width() as u64;
    let bound = (n / 2) * (n / (2 * npe as u64));
    Ok(BoundReport {
        kind,
        bound: Some(bound),
        delay,
        slack: Some(bound as i64 - delay as i64),
        satisfied: delay < bound,
    })
}

/// Smallest issue-cycle distance between an operation writing a cell and the
/// next operation reading it, measured directly on the trace.
pub fn min_dependency_distance(trace: &ScheduleTrace) -> Option<u64> {
    let mut last_write = vec![None::<u64>; trace.degree()];
    let mut best: Option<u64> = None;
    for cycle in &trace.cycles {
        for op in &cycle.ops {
            for read in op.reads.iter().filter(|a| a.array == Array::Main) {
                if let Some(w) = last_write[read.index] {
                    let d = cycle.cycle - w;
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        for op in &cycle.ops {
            for w in &op.writes {
                last_write[w.index] = Some(cycle.cycle);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: usize,
    pub phase: u8,
    pub gap: usize,
    pub cycles: u64,
    pub rounds: Vec<RoundStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub kind: OpKind,
    pub degree: usize,
    pub npe: usize,
    pub issue_cycles: u64,
    pub operations: usize,
    pub stages: Vec<StageStats>,
    /// Busy processing elements in each issue cycle.
    pub active_pes: Vec<usize>,
    /// Reads per bank of the main array over the whole trace.
    pub bank_reads: Vec<u64>,
    pub bank_writes: Vec<u64>,
}

impl ScheduleStats {
    /// Mean fraction of busy processing elements per issue cycle.
    pub fn utilization(&self) -> f64 {
        if self.active_pes.is_empty() {
            return 0.0;
        }
        let busy: usize = self.active_pes.iter().sum();
        busy as f64 / (self.active_pes.len() * self.npe) as f64
    }

    pub fn min_cycle_utilization(&self) -> f64 {
        self.active_pes
            .iter()
            .map(|&a| a as f64 / self.npe as f64)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn trace_stats(trace: &ScheduleTrace) -> ScheduleStats {
    let n = trace.layout.width();
    let mut bank_reads = vec![0u64; n];
    let mut bank_writes = vec![0u64; n];
    let mut stages: Vec<StageStats> = trace
        .stages
        .iter()
        .map(|s| StageStats {
            stage: s.stage,
            phase: s.phase,
            gap: s.gap,
            cycles: s.cycles,
            rounds: Vec::new(),
        })
        .collect();
    for cycle in &trace.cycles {
        for op in &cycle.ops {
            for r in op.reads.iter().filter(|a| a.array == Array::Main) {
                bank_reads[r.cell.bank] += 1;
            }
            for w in &op.writes {
                bank_writes[w.cell.bank] += 1;
            }
        }
        if let Some(first) = cycle.ops.first() {
            let rounds = &mut stages[first.stage].rounds;
            match rounds.last_mut() {
                Some(last) if last.round == first.round => last.cycles += 1,
                _ => rounds.push(RoundStats {
                    round: first.round,
                    cycles: 1,
                }),
            }
        }
    }
    ScheduleStats {
        kind: trace.kind,
        degree: trace.degree(),
        npe: trace.npe,
        issue_cycles: trace.issue_cycles(),
        operations: trace.operations(),
        stages,
        active_pes: trace.cycles.iter().map(|c| c.ops.len()).collect(),
        bank_reads,
        bank_writes,
    }
}

#[derive(Debug, Serialize)]
struct CsvRow {
    cycle: u64,
    pe: usize,
    stage: usize,
    round: usize,
    r0_bank: usize,
    r0_addr: usize,
    r1_bank: usize,
    r1_addr: usize,
    w0_bank: usize,
    w0_addr: usize,
    w1_bank: Option<usize>,
    w1_addr: Option<usize>,
    tw_idx: Option<usize>,
}

/// CSV export, one row per operation.
pub fn trace_to_csv(trace: &ScheduleTrace) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for cycle in &trace.cycles {
        for op in &cycle.ops {
            let w1 = op.writes.get(1).map(|a| a.cell);
            writer
                .serialize(CsvRow {
                    cycle: cycle.cycle,
                    pe: op.pe,
                    stage: op.stage,
                    round: op.round,
                    r0_bank: op.reads[0].cell.bank,
                    r0_addr: op.reads[0].cell.address,
                    r1_bank: op.reads[1].cell.bank,
                    r1_addr: op.reads[1].cell.address,
                    w0_bank: op.writes[0].cell.bank,
                    w0_addr: op.writes[0].cell.address,
                    w1_bank: w1.map(|c| c.bank),
                    w1_addr: w1.map(|c| c.address),
                    tw_idx: op.twiddle,
                })
                .expect("in-memory CSV write");
        }
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}
