use std::collections::HashMap;
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchResult, Region};
use crate::lnms::SampleStore;
use crate::miqp::{HybridOcp, ModeSequence};
use crate::qp::{assemble_fixed_mode_ocp, QpSettings, QpSolver, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x1: f64,
    pub x2: f64,
    pub region_id: usize,
    /// First input of the fixed-mode QP at the point, NaN when infeasible or
    /// not requested.
    pub u0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionGrid {
    pub points: Vec<GridPoint>,
    /// Sequence of each region id.
    pub regions: Vec<ModeSequence>,
}

impl PartitionGrid {
    pub fn distinct_regions(&self) -> usize {
        self.regions.len()
    }

    /// CSV with header `x1,x2,region_id,u0`.
    pub fn write_csv<W: Write>(&self, out: W) -> BenchResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2", "region_id", "u0"])?;
        for p in &self.points {
            w.write_record([p.x1.to_string(), p.x2.to_string(), p.region_id.to_string(), p.u0.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Labels a `resolution[0] × resolution[1]` grid over `bounds` with the
/// nearest stored sequence. Region ids follow first appearance in scan
/// order (`x1` outer, `x2` inner). With `ocp`, each point also gets the first
/// input of its fixed-mode QP.
pub fn export_partition_grid(
    store: &SampleStore,
    ocp: Option<&HybridOcp>,
    resolution: [usize; 2],
    bounds: &Region,
) -> BenchResult<PartitionGrid> {
    if store.dim() != 2 {
        return Err(BenchError::UnsupportedDimension(store.dim()));
    }
    bounds.validate(Some(2))?;
    if store.is_empty() {
        return Err(BenchError::EmptyStore);
    }
    if resolution.contains(&0) {
        return Err(BenchError::InvalidConfig("grid resolution must be positive".into()));
    }
    let axis = |k: usize, i: usize| {
        let n = resolution[k];
        if n == 1 {
            0.5 * (bounds.lo[k] + bounds.hi[k])
        } else {
            bounds.lo[k] + (bounds.hi[k] - bounds.lo[k]) * i as f64 / (n - 1) as f64
        }
    };
    let mut solver = QpSolver::new(QpSettings::default());
    let mut ids: HashMap<ModeSequence, usize> = HashMap::new();
    let mut regions = Vec::new();
    let mut points = Vec::with_capacity(resolution[0] * resolution[1]);
    for i in 0..resolution[0] {
        for j in 0..resolution[1] {
            let (x1, x2) = (axis(0, i), axis(1, j));
            let x = DVector::from_column_slice(&[x1, x2]);
            let (modes, _) = store.nn_query(&x)?.ok_or(BenchError::EmptyStore)?;
            let u0 = match ocp {
                Some(ocp) => {
                    let qp = assemble_fixed_mode_ocp(ocp, &modes, &x)?;
                    let sol = solver.solve(&qp).map_err(crate::miqp::MiqpError::from)?;
                    if sol.status == QpStatus::Optimal {
                        sol.z[0]
                    } else {
                        f64::NAN
                    }
                }
                None => f64::NAN,
            };
            let next = regions.len();
            let region_id = *ids.entry(modes.clone()).or_insert_with(|| {
                regions.push(modes);
                next
            });
            points.push(GridPoint { x1, x2, region_id, u0 });
        }
    }
    Ok(PartitionGrid { points, regions })
}
