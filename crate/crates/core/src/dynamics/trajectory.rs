//! Recorded trajectories and their on-disk formats.
//!
//! The binary format is columnar: the 8-byte magic `LVTRAJ01`, a little-endian
//! `u32` header length, a JSON header describing the columns (name and unit),
//! sample rate, seed and configuration, then each column as `n_samples`
//! little-endian `f64` values in header order.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnergyLedger, Recorder, RunSummary, SimOptions, Simulation};
use crate::error::{Error, Result};
use crate::params::{Axis, Environment, ParticleSpec, TrapConfig};

const MAGIC: &[u8; 8] = b"LVTRAJ01";

const COLUMNS: [(&str, &str); 8] = [
    ("t", "s"),
    ("x", "m"),
    ("y", "m"),
    ("z", "m"),
    ("vx", "m/s"),
    ("vy", "m/s"),
    ("vz", "m/s"),
    ("electrode", "V"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub particle: ParticleSpec,
    pub trap: TrapConfig,
    pub env: Environment,
    pub options: SimOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrajectory {
    /// Rate of the stored samples in Hz.
    pub sample_rate: f64,
    pub times: Vec<f64>,
    pub positions: [Vec<f64>; 3],
    pub velocities: [Vec<f64>; 3],
    /// Electrode voltage applied during each stored step.
    pub electrode_voltage: Vec<f64>,
    pub rng_seed: u64,
    pub config_snapshot: ConfigSnapshot,
    pub escaped: bool,
    pub escape_time: Option<f64>,
    pub ledger: EnergyLedger,
}

#[derive(Debug, Serialize, Deserialize)]
struct Column {
    name: String,
    unit: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    sample_rate: f64,
    rng_seed: u64,
    n_samples: usize,
    escaped: bool,
    escape_time: Option<f64>,
    columns: Vec<Column>,
    config: ConfigSnapshot,
    ledger: EnergyLedger,
}

impl SimTrajectory {
    pub(crate) fn from_recorder(rec: Recorder, sim: &Simulation<'_>, summary: &RunSummary) -> Self {
        SimTrajectory {
            sample_rate: sim.opts.recorded_rate(),
            times: rec.times,
            positions: rec.positions,
            velocities: rec.velocities,
            electrode_voltage: rec.voltages,
            rng_seed: sim.opts.seed,
            config_snapshot: ConfigSnapshot {
                particle: *sim.particle,
                trap: *sim.trap,
                env: *sim.env,
                options: sim.opts,
            },
            escaped: summary.escaped,
            escape_time: summary.escape_time,
            ledger: summary.ledger,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, axis: Axis) -> &[f64] {
        &self.positions[axis.index()]
    }

    pub fn velocity(&self, axis: Axis) -> &[f64] {
        &self.velocities[axis.index()]
    }

    /// Mean square displacement along `axis`, skipping the first `skip` seconds.
    pub fn mean_square(&self, axis: Axis, skip: f64) -> f64 {
        let start = ((skip * self.sample_rate).round() as usize).min(self.len());
        let u = &self.position(axis)[start..];
        u.iter().map(|x| x * x).sum::<f64>() / u.len().max(1) as f64
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(self.velocities.iter())
            .all(|c| c.iter().all(|x| x.is_finite()))
    }

    fn columns(&self) -> [&[f64]; 8] {
        [
            &self.times,
            &self.positions[0],
            &self.positions[1],
            &self.positions[2],
            &self.velocities[0],
            &self.velocities[1],
            &self.velocities[2],
            &self.electrode_voltage,
        ]
    }

    pub fn write_binary<W: Write>(&self, writer: W) -> Result<()> {
        let header = Header {
            format: "levitrap-trajectory".into(),
            version: 1,
            sample_rate: self.sample_rate,
            rng_seed: self.rng_seed,
            n_samples: self.len(),
            escaped: self.escaped,
            escape_time: self.escape_time,
            columns: COLUMNS
                .iter()
                .map(|(n, u)| Column {
                    name: (*n).into(),
                    unit: (*u).into(),
                })
                .collect(),
            config: self.config_snapshot.clone(),
            ledger: self.ledger,
        };
        let json = serde_json::to_vec(&header)?;
        let mut w = BufWriter::new(writer);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for col in self.columns() {
            for x in col {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(reader: R) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a levitrap trajectory file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        if header.columns.len() != COLUMNS.len()
            || header
                .columns
                .iter()
                .zip(COLUMNS.iter())
                .any(|(c, (n, _))| c.name != *n)
        {
            return Err(Error::Format("unexpected trajectory column layout".into()));
        }
        let n = header.n_samples;
        let mut read_col = || -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect())
        };
        let times = read_col()?;
        let positions = [read_col()?, read_col()?, read_col()?];
        let velocities = [read_col()?, read_col()?, read_col()?];
        let electrode_voltage = read_col()?;
        Ok(SimTrajectory {
            sample_rate: header.sample_rate,
            times,
            positions,
            velocities,
            electrode_voltage,
            rng_seed: header.rng_seed,
            config_snapshot: header.config,
            escaped: header.escaped,
            escape_time: header.escape_time,
            ledger: header.ledger,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(std::fs::File::open(path)?)
    }

    /// CSV with columns `t,x,y,z,vx,vy,vz`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "t,x,y,z,vx,vy,vz")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.times[k],
                self.positions[0][k],
                self.positions[1][k],
                self.positions[2][k],
                self.velocities[0][k],
                self.velocities[1][k],
                self.velocities[2][k]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the time and position columns of a CSV export; other fields are defaulted.
    pub fn read_csv_positions<R: Read>(reader: R) -> Result<(Vec<f64>, [Vec<f64>; 3])> {
        let mut times = Vec::new();
        let mut pos = [Vec::new(), Vec::new(), Vec::new()];
        let mut header = true;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if std::mem::take(&mut header) {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
            if vals.len() < 4 {
                return Err(Error::Format(format!("line {}: expected 7 columns", i + 1)));
            }
            times.push(vals[0]);
            for a in 0..3 {
                pos[a].push(vals[a + 1]);
            }
        }
        Ok((times, pos))
    }
}
