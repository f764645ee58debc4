//! Snapshot containers and moment CSV export.
//!
//! Moment CSV columns, in order:
//!
//! ```text
//! t,subsystem,ix,iy,rho,vx_mean,vy_mean,u_mean,defined
//! ```
//!
//! `subsystem` is `fs<i>` or `sfs<j>`; `u_mean` holds the mean activity of
//! either scale. Mean columns are empty where `defined` is `0`. Homogeneous
//! runs write `t,subsystem,u_mean,mass` instead. Numbers use the shortest
//! representation that round-trips.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Scale};
use crate::scalar::Scalar;
use crate::state::field::DistributionField;
use crate::state::grid::{PhaseGrid, SpaceGrid};
use crate::state::moments::MomentField;

pub const SNAPSHOT_FORMAT: &str = "msktap-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

pub const MOMENTS_HEADER: [&str; 9] = [
    "t",
    "subsystem",
    "ix",
    "iy",
    "rho",
    "vx_mean",
    "vy_mean",
    "u_mean",
    "defined",
];
pub const HOMOGENEOUS_HEADER: [&str; 4] = ["t", "subsystem", "u_mean", "mass"];

pub fn subsystem_label(scale: Scale, index: usize) -> String {
    format!("{scale}{index}")
}

/// Self-describing dump of one scale's distribution: grid descriptors plus
/// the raw value array in `(subsystem, cell, velocity, activity)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub format: String,
    pub version: u32,
    pub t: T,
    pub step: u64,
    pub scale: Scale,
    pub grid: PhaseGrid<T>,
    pub shape: [usize; 4],
    pub values: Vec<T>,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> Snapshot<T> {
    pub fn capture(t: T, step: u64, scale: Scale, grid: &PhaseGrid<T>, field: &DistributionField<T>) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            t,
            step,
            scale,
            grid: grid.clone(),
            shape: field.shape(),
            values: field.values().to_vec(),
        }
    }

    pub fn to_field(&self) -> Result<DistributionField<T>> {
        if self.format != SNAPSHOT_FORMAT || self.version != SNAPSHOT_VERSION {
            return Err(Error::Config(format!(
                "unsupported snapshot {} v{}",
                self.format, self.version
            )));
        }
        self.grid.validate()?;
        let field = DistributionField::from_values(self.shape[0], &self.grid, self.values.clone())?;
        if field.shape() != self.shape {
            return Err(Error::Grid(format!(
                "snapshot shape {:?} does not match its grid {:?}",
                self.shape,
                field.shape()
            )));
        }
        Ok(field)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Streaming writer for the spatial moments CSV.
pub struct MomentCsv<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> MomentCsv<W> {
    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(MOMENTS_HEADER)?;
        Ok(Self { writer })
    }

    pub fn write_frame<T: Scalar>(
        &mut self,
        t: T,
        label: &str,
        moments: &MomentField<T>,
        space: &SpaceGrid<T>,
    ) -> Result<()> {
        let t = t.to_string();
        for c in 0..moments.density.len() {
            let (ix, iy) = space.coords(c);
            let defined = moments.defined[c];
            let mean = |x: T| if defined { x.to_string() } else { String::new() };
            self.writer.write_record([
                t.as_str(),
                label,
                &ix.to_string(),
                &iy.to_string(),
                &moments.density[c].to_string(),
                &mean(moments.mean_velocity[c][0]),
                &mean(moments.mean_velocity[c][1]),
                &mean(moments.mean_activity[c]),
                if defined { "1" } else { "0" },
            ])?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io("moments.csv", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::io("moments.csv", e.into_error()))
    }
}

/// Streaming writer for the homogeneous (activity-only) CSV.
pub struct HomogeneousCsv<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> HomogeneousCsv<W> {
    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(HOMOGENEOUS_HEADER)?;
        Ok(Self { writer })
    }

    pub fn write_row<T: Scalar>(&mut self, t: T, label: &str, u_mean: Option<T>, mass: T) -> Result<()> {
        let u = u_mean.map(|u| u.to_string()).unwrap_or_default();
        self.writer
            .write_record([t.to_string().as_str(), label, &u, &mass.to_string()])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io("moments.csv", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::io("moments.csv", e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::grid::{ActivityGrid, Boundary, VelocityGrid};
    use crate::state::moments::moments;

    fn grid() -> PhaseGrid<f64> {
        PhaseGrid::new(
            SpaceGrid::new(2.0, 1.0, 2, 1, Boundary::Periodic).unwrap(),
            VelocityGrid::uniform(2, 1, 1.0).unwrap(),
            ActivityGrid::new(2).unwrap(),
        )
    }

    #[test]
    fn moment_csv_layout() {
        let g = grid();
        let f = DistributionField::from_fn(1, &g, |_, c, v, a| if c == 0 && v == 0 { (a + 1) as f64 } else { 0.0 });
        let m = moments(&f, 0, &g);
        let mut w = MomentCsv::new(Vec::new()).unwrap();
        w.write_frame(0.5, "fs0", &m, &g.space).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,subsystem,ix,iy,rho,vx_mean,vy_mean,u_mean,defined");
        // rho = (1 + 2) * 0.5 * 0.5; u_mean = (0.25 * 1 + 0.75 * 2) / 3
        assert_eq!(lines[1], format!("0.5,fs0,0,0,0.75,1,0,{},1", (0.25 + 1.5) / 3.0));
        assert_eq!(lines[2], "0.5,fs0,1,0,0,,,,0");
    }

    #[test]
    fn homogeneous_csv_layout() {
        let mut w = HomogeneousCsv::new(Vec::new()).unwrap();
        w.write_row(1.0, "sfs0", Some(0.25), 2.0).unwrap();
        w.write_row(1.0, "fs1", None, 0.0).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text, "t,subsystem,u_mean,mass\n1,sfs0,0.25,2\n1,fs1,,0\n");
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let g = grid();
        let f = DistributionField::from_fn(2, &g, |s, c, v, a| 0.1 * (s + 2 * c + 3 * v + 5 * a) as f64 + 1e-17);
        let snap = Snapshot::capture(0.3, 7, Scale::Fs, &g, &f);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        snap.write(&path).unwrap();
        let back = Snapshot::<f64>::read(&path).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_field().unwrap(), f);
    }
}
