use std::io::Write;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{LnmsError, LnmsResult, SampleStore};
use crate::miqp::{solve_bnb, BnbConfig, HybridOcp, ModeSequence};
use crate::qp::{assemble_fixed_mode_ocp, QpSettings, QpSolver, QpStatus};

/// Slack allowed when comparing the relabeled objective with the old one.
const NON_WORSENING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprovementOutcome {
    Unchanged,
    Relabeled,
    /// The stored sequence is infeasible at the stored state.
    SkippedInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementEntry {
    pub index: usize,
    pub old_obj: f64,
    pub new_obj: f64,
    pub changed: bool,
    pub outcome: ImprovementOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub entries: Vec<ImprovementEntry>,
}

impl ImprovementReport {
    pub fn changed(&self) -> usize {
        self.entries.iter().filter(|e| e.changed).count()
    }

    pub fn skipped(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.outcome == ImprovementOutcome::SkippedInfeasible)
            .count()
    }

    /// CSV with header `index,old_obj,new_obj,changed`.
    pub fn write_csv<W: Write>(&self, out: W) -> LnmsResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "old_obj", "new_obj", "changed"])?;
        for e in &self.entries {
            w.write_record([
                e.index.to_string(),
                e.old_obj.to_string(),
                e.new_obj.to_string(),
                e.changed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fixed_objective(solver: &mut QpSolver, ocp: &HybridOcp, x: &nalgebra::DVector<f64>, modes: &ModeSequence) -> LnmsResult<Option<f64>> {
    let qp = assemble_fixed_mode_ocp(ocp, modes, x)?;
    let sol = solver.solve(&qp).map_err(crate::miqp::MiqpError::from)?;
    Ok((sol.status == QpStatus::Optimal).then_some(sol.objective))
}

/// Relabels stored samples with warm-started branch-and-bound.
///
/// Each selected sample's sequence seeds the incumbent of a search limited
/// to `budget_per_sample` seconds. The returned sequence replaces the stored
/// one only when its fixed-mode objective is no worse; samples whose stored
/// sequence is infeasible are skipped and reported. `subset` restricts the
/// pass to the given indices, in the given order.
pub fn improve_samples(
    store: &mut SampleStore,
    ocp: &HybridOcp,
    budget_per_sample: f64,
    subset: Option<&[usize]>,
) -> LnmsResult<ImprovementReport> {
    let all: Vec<usize>;
    let indices = match subset {
        Some(s) => s,
        None => {
            all = (0..store.len()).collect();
            &all
        }
    };
    let config = BnbConfig {
        time_limit: Some(budget_per_sample.max(0.0)),
        gap_tol: 0.0,
        stop_at_first_feasible: false,
        ..BnbConfig::default()
    };
    let mut solver = QpSolver::new(QpSettings::default());
    let mut report = ImprovementReport::default();
    for &index in indices {
        let sample = store.sample(index).ok_or(LnmsError::IndexOutOfRange(index))?.clone();
        let Some(old_obj) = fixed_objective(&mut solver, ocp, &sample.x, &sample.modes)? else {
            warn!("sample {index}: stored sequence {} is infeasible, skipped", sample.modes);
            report.entries.push(ImprovementEntry {
                index,
                old_obj: f64::NAN,
                new_obj: f64::NAN,
                changed: false,
                outcome: ImprovementOutcome::SkippedInfeasible,
            });
            continue;
        };
        let sol = solve_bnb(ocp, &sample.x, Some(&sample.modes), &config)?;
        let mut entry = ImprovementEntry {
            index,
            old_obj,
            new_obj: old_obj,
            changed: false,
            outcome: ImprovementOutcome::Unchanged,
        };
        if sol.modes != sample.modes {
            if let Some(new_obj) = fixed_objective(&mut solver, ocp, &sample.x, &sol.modes)? {
                if new_obj <= old_obj + NON_WORSENING_TOL {
                    store.relabel(index, sol.modes, new_obj)?;
                    entry.new_obj = new_obj;
                    entry.changed = true;
                    entry.outcome = ImprovementOutcome::Relabeled;
                }
            }
        }
        report.entries.push(entry);
    }
    info!(
        "improved {} samples: {} relabeled, {} skipped",
        report.entries.len(),
        report.changed(),
        report.skipped()
    );
    Ok(report)
}
