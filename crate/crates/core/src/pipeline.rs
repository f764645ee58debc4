//! Runs a configuration to completion and writes its outputs:
//! `moments.csv`, `manifest.toml` and optional `snapshots/*.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{Mode, SystemConfig};
use crate::error::{Error, Result, Scale};
use crate::integrator::{step, step_homogeneous, SimulationState};
use crate::scalar::Scalar;
use crate::state::io::{subsystem_label, HomogeneousCsv, MomentCsv, Snapshot};
use crate::state::{moments, PhaseGrid};

pub const MOMENTS_FILE: &str = "moments.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub steps: u64,
    pub t: f64,
    pub frames: usize,
    pub snapshots: usize,
    pub out_dir: PathBuf,
}

/// The configuration as it will be run: `homogeneous` forces the
/// homogeneous mode.
pub fn resolved(cfg: &SystemConfig, homogeneous: bool) -> SystemConfig {
    let mut cfg = cfg.clone();
    if homogeneous {
        cfg.system.mode = Mode::Homogeneous;
    }
    cfg
}

/// Writes the manifest, integrates, and streams moments to `out_dir`.
pub fn run_to_dir<T>(cfg: &SystemConfig, out_dir: &Path, homogeneous: bool) -> Result<RunSummary>
where
    T: Scalar + Serialize + DeserializeOwned,
{
    let cfg = resolved(cfg, homogeneous);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = out_dir.join(MANIFEST_FILE);
    std::fs::write(&manifest, format!("# resolved configuration\n{}", cfg.to_toml()?))
        .map_err(|e| Error::io(&manifest, e))?;

    let csv_path = out_dir.join(MOMENTS_FILE);
    let file = BufWriter::new(File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?);
    let mut out = Output {
        dir: out_dir,
        snapshot_stride: cfg.output.snapshot_stride as u64,
        frames: 0,
        snapshots: 0,
    };
    let integ = cfg.integrator::<T>()?;
    let steps = integ.steps();
    let stride = integ.output_stride as u64;
    let is_output = |k: u64| k == 0 || k.is_multiple_of(stride) || k == steps;

    let last = match cfg.mode() {
        Mode::Spatial => {
            let setup = cfg.build_spatial::<T>()?;
            let (fs, sfs) = (&setup.model.fs.grid, &setup.model.sfs.grid);
            let mut csv = MomentCsv::new(file)?;
            let mut state = setup.initial;
            for k in 0..=steps {
                if k > 0 {
                    state = step(&state, &setup.integrator, &setup.model, &setup.scheme)?;
                }
                if is_output(k) {
                    for (scale, field, grid) in [(Scale::Fs, &state.f, fs), (Scale::Sfs, &state.phi, sfs)] {
                        for s in 0..field.subsystems() {
                            let mf = moments(field, s, grid);
                            csv.write_frame(state.t, &subsystem_label(scale, s), &mf, &grid.space)?;
                        }
                    }
                    out.frames += 1;
                }
                out.snapshot(&state, fs, sfs, steps)?;
                progress(k, steps);
            }
            csv.into_inner()?.flush().map_err(|e| Error::io(&csv_path, e))?;
            state
        }
        Mode::Homogeneous => {
            let setup = cfg.build_homogeneous::<T>()?;
            let (fs, sfs) = (&setup.model.fs, &setup.model.sfs);
            let mut csv = HomogeneousCsv::new(file)?;
            let mut state = setup.initial;
            for k in 0..=steps {
                if k > 0 {
                    state = step_homogeneous(&state, &setup.integrator, &setup.model)?;
                }
                if is_output(k) {
                    for (scale, field, grid) in [(Scale::Fs, &state.f, fs), (Scale::Sfs, &state.phi, sfs)] {
                        for s in 0..field.subsystems() {
                            let mf = moments(field, s, grid);
                            csv.write_row(
                                state.t,
                                &subsystem_label(scale, s),
                                mf.mean_activity_at(0),
                                field.total_mass(s, grid),
                            )?;
                        }
                    }
                    out.frames += 1;
                }
                out.snapshot(&state, fs, sfs, steps)?;
                progress(k, steps);
            }
            csv.into_inner()?.flush().map_err(|e| Error::io(&csv_path, e))?;
            state
        }
    };
    log::info!(
        "finished {steps} steps at t = {}; output in {}",
        last.t,
        out_dir.display()
    );
    Ok(RunSummary {
        mode: cfg.mode(),
        steps,
        t: last.t.as_f64(),
        frames: out.frames,
        snapshots: out.snapshots,
        out_dir: out_dir.to_path_buf(),
    })
}

fn progress(k: u64, steps: u64) {
    if steps >= 10 && k.is_multiple_of(steps / 10) {
        log::info!("step {k}/{steps}");
    }
}

struct Output<'a> {
    dir: &'a Path,
    snapshot_stride: u64,
    frames: usize,
    snapshots: usize,
}

impl Output<'_> {
    fn snapshot<T>(
        &mut self,
        state: &SimulationState<T>,
        fs: &PhaseGrid<T>,
        sfs: &PhaseGrid<T>,
        steps: u64,
    ) -> Result<()>
    where
        T: Scalar + Serialize + DeserializeOwned,
    {
        let k = state.step;
        if self.snapshot_stride == 0 || !(k.is_multiple_of(self.snapshot_stride) || k == steps) {
            return Ok(());
        }
        let dir = self.dir.join(SNAPSHOT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Snapshot::capture(state.t, k, Scale::Fs, fs, &state.f).write(&dir.join(format!("fs_{k:08}.json")))?;
        Snapshot::capture(state.t, k, Scale::Sfs, sfs, &state.phi).write(&dir.join(format!("sfs_{k:08}.json")))?;
        self.snapshots += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn homogeneous_run_writes_activity_columns() {
        let mut over = BTreeMap::new();
        over.insert("t_end".to_string(), 0.05);
        over.insert("output_stride".to_string(), 1.0);
        let cfg = crate::scenarios::preset_config("immune", &over).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = run_to_dir::<f64>(&cfg, dir.path(), false).unwrap();
        assert_eq!(summary.steps, 5);
        assert_eq!(summary.frames, 6);
        let text = std::fs::read_to_string(dir.path().join(MOMENTS_FILE)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,subsystem,u_mean,mass"));
        assert_eq!(text.lines().count(), 1 + 6 * 3);
        assert!(text.lines().nth(1).unwrap().starts_with("0,fs0,"));
    }

    #[test]
    fn manifest_rerun_is_bit_identical() {
        let mut over = BTreeMap::new();
        over.insert("t_end".to_string(), 0.6);
        let cfg = crate::scenarios::preset_config("crowd", &over).unwrap();
        let mut cfg = cfg;
        cfg.output.snapshot_stride = 2;
        let a = tempfile::tempdir().unwrap();
        let s = run_to_dir::<f64>(&cfg, a.path(), false).unwrap();
        assert_eq!(s.snapshots, 3);
        let again = SystemConfig::from_file(&a.path().join(MANIFEST_FILE)).unwrap();
        let b = tempfile::tempdir().unwrap();
        run_to_dir::<f64>(&again, b.path(), false).unwrap();
        let read = |d: &Path| std::fs::read(d.join(MOMENTS_FILE)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        let snap: Snapshot<f64> = Snapshot::read(&a.path().join("snapshots/fs_00000003.json")).unwrap();
        assert_eq!(snap.step, 3);
    }
}
