use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyBreakdown;

pub const LEDGER_HEADER: &str = "t,kinetic,elastic,bulk,total,dissipation,law_residual,monotone";

/// Relative slack, in units of `|E|`, for calling a step energy-monotone.
const MONOTONE_SLACK: f64 = 64.0 * f64::EPSILON;

/// One accepted step: energies at the new time level and the discrete law
/// residual `(Eⁿ⁺¹ − Eⁿ)/dt + Dⁿ⁺¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub bulk: f64,
    pub total: f64,
    pub dissipation: f64,
    pub law_residual: f64,
    pub monotone: bool,
}

impl LedgerRow {
    pub fn new(t: f64, dt: f64, before: &EnergyBreakdown, after: &EnergyBreakdown) -> Self {
        let slack = MONOTONE_SLACK * before.total.abs().max(after.total.abs());
        LedgerRow {
            t,
            kinetic: after.kinetic,
            elastic: after.elastic,
            bulk: after.bulk,
            total: after.total,
            dissipation: after.dissipation,
            law_residual: (after.total - before.total) / dt + after.dissipation,
            monotone: after.total <= before.total + slack,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.t,
            self.kinetic,
            self.elastic,
            self.bulk,
            self.total,
            self.dissipation,
            self.law_residual,
            u8::from(self.monotone)
        )
    }

    fn parse(line: &str) -> Option<Self> {
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 8 {
            return None;
        }
        let f = |i: usize| v[i].trim().parse::<f64>().ok();
        let monotone = match v[7].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return None,
        };
        Some(LedgerRow {
            t: f(0)?,
            kinetic: f(1)?,
            elastic: f(2)?,
            bulk: f(3)?,
            total: f(4)?,
            dissipation: f(5)?,
            law_residual: f(6)?,
            monotone,
        })
    }
}

/// Energy history of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// Energies of the initial state.
    pub initial: Option<EnergyBreakdown>,
    pub initial_t: f64,
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new(t0: f64, initial: EnergyBreakdown) -> Self {
        EnergyLedger {
            initial: Some(initial),
            initial_t: t0,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    /// Largest `|law_residual|` over all rows (0 when empty).
    pub fn max_law_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.law_residual.abs())
            .fold(0.0, f64::max)
    }

    pub fn all_monotone(&self) -> bool {
        self.rows.iter().all(|r| r.monotone)
    }

    /// Totals including the initial state (when known).
    pub fn totals(&self) -> Vec<f64> {
        self.initial
            .iter()
            .map(|e| e.total)
            .chain(self.rows.iter().map(|r| r.total))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(96 * (self.rows.len() + 1));
        out.push_str(LEDGER_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv_line());
        }
        out
    }

    /// Parses the CSV written by [`EnergyLedger::to_csv`]. The initial state
    /// is not part of the file.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == LEDGER_HEADER => {}
            _ => return Err("missing energy ledger header".into()),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                LedgerRow::parse(line)
                    .ok_or_else(|| format!("bad ledger row {}: {line:?}", i + 2))?,
            );
        }
        Ok(EnergyLedger {
            initial: None,
            initial_t: 0.0,
            rows,
        })
    }
}
