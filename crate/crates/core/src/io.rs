//! JSON and CSV payloads exchanged between pipeline stages.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datamat::{DataMatrices, IntervalSet};
use crate::error::{Error, HistoryTable, Result};
use crate::linalg::SymMatrix;
use crate::model::{GainPair, SystemModel};
use crate::simulate::{MeanTrajectory, PopulationRun, TimeGrid};

/// Row-major nested arrays.
pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: rows have unequal lengths")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// System model document `{A, B, C, Q, R, rho}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    pub rho: f64,
}

impl ModelDoc {
    pub fn from_model(model: &SystemModel<f64>) -> Self {
        Self {
            a: to_rows(model.a()),
            b: to_rows(model.b()),
            c: to_rows(model.c()),
            q: to_rows(model.q()),
            r: to_rows(model.r()),
            rho: model.rho(),
        }
    }

    pub fn to_model(&self) -> Result<SystemModel<f64>> {
        SystemModel::new(
            from_rows(&self.a, "A")?,
            from_rows(&self.b, "B")?,
            from_rows(&self.c, "C")?,
            SymMatrix::from_matrix(from_rows(&self.q, "Q")?)?,
            SymMatrix::from_matrix(from_rows(&self.r, "R")?)?,
            self.rho,
        )
    }
}

/// Data matrices document `{I, IX, IXV, IXhat, n, m, rho, intervals}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDoc {
    #[serde(rename = "I")]
    pub i: Rows,
    #[serde(rename = "IX")]
    pub ix: Rows,
    #[serde(rename = "IXV")]
    pub ixv: Rows,
    #[serde(rename = "IXhat")]
    pub ixhat: Rows,
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub intervals: Vec<f64>,
}

impl DataDoc {
    pub fn from_matrices(dm: &DataMatrices<f64>) -> Self {
        Self {
            i: to_rows(&dm.i),
            ix: to_rows(&dm.ix),
            ixv: to_rows(&dm.ixv),
            ixhat: to_rows(&dm.ixhat),
            n: dm.n,
            m: dm.m,
            rho: dm.rho,
            intervals: dm.intervals.endpoints().to_vec(),
        }
    }

    pub fn to_matrices(&self) -> Result<DataMatrices<f64>> {
        let dm = DataMatrices {
            i: from_rows(&self.i, "I")?,
            ix: from_rows(&self.ix, "IX")?,
            ixv: from_rows(&self.ixv, "IXV")?,
            ixhat: from_rows(&self.ixhat, "IXhat")?,
            n: self.n,
            m: self.m,
            rho: self.rho,
            intervals: IntervalSet::new(self.intervals.clone())?,
        };
        dm.validate()?;
        Ok(dm)
    }
}

/// Gain pair `{K, K_Y}`; any document carrying these fields (such as a
/// learner summary) parses as one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsDoc {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "K_Y")]
    pub k_y: Rows,
}

impl GainsDoc {
    pub fn from_gains(g: &GainPair<f64>) -> Self {
        Self { k: to_rows(&g.k), k_y: to_rows(&g.k_y) }
    }

    pub fn to_gains(&self) -> Result<GainPair<f64>> {
        Ok(GainPair { k: from_rows(&self.k, "K")?, k_y: from_rows(&self.k_y, "K_Y")? })
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_history_csv(path: &Path, table: &HistoryTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per grid point: `t, X_0.., V_0..`.
pub fn write_trajectory_csv(path: &Path, traj: &MeanTrajectory<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.n()).map(|i| format!("X_{i}")));
    header.extend((0..traj.m()).map(|i| format!("V_{i}")));
    w.write_record(&header)?;
    for (k, t) in traj.grid.points().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(traj.x.column(k).iter().map(|v| v.to_string()));
        row.extend(traj.v.column(k).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `average.csv` (`t, avg_i.., aggregate_i..`, every grid point) and
/// `agents.csv` (`agent, t, x_i..`, every `stride`-th grid point) into `dir`.
pub fn write_population_csv(dir: &Path, run: &PopulationRun<f64>, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let n = run.xi0.len();
    let mut w = csv::Writer::from_path(dir.join("average.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("avg_{i}")));
    header.extend((0..n).map(|i| format!("aggregate_{i}")));
    w.write_record(&header)?;
    for (k, t) in run.grid.points().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(run.average.column(k).iter().map(|v| v.to_string()));
        row.extend(run.aggregate.column(k).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("agents.csv"))?;
    let mut header = vec!["agent".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for (a, path) in run.agents.iter().enumerate() {
        for k in (0..run.grid.len()).step_by(stride) {
            let mut row = vec![a.to_string(), run.grid.point(k).to_string()];
            row.extend(path.column(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Grid description used in JSON sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl From<TimeGrid<f64>> for GridDoc {
    fn from(g: TimeGrid<f64>) -> Self {
        Self { t0: g.t0(), dt: g.dt(), steps: g.steps() }
    }
}

impl GridDoc {
    pub fn to_grid(self) -> Result<TimeGrid<f64>> {
        TimeGrid::new(self.t0, self.dt, self.steps)
    }
}
