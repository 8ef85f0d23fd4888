//! CSV formats written and read by the commands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use pcmu::agent::EpisodeLog;
use pcmu::attack::AttackSample;
use pcmu::data::{write_csv, LoadCsvRecord, LoadEpisode};
use pcmu::env::Trajectory;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TRADEOFF_HEADER: &str = "lambda,backend,seed,episodes,cost_per_day,ksg_mi_nats,load_nmse,occ_balanced_acc";
pub const LOG_HEADER: &str = "episode,total_reward,epsilon,hnet_loss,wall_ms";

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Optional floats print as empty cells.
fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Episodes as consecutive days of the normalized load CSV, starting at
/// midnight UTC on a fixed date so the file is reproducible.
pub fn write_episodes_csv(path: &Path, episodes: &[LoadEpisode], delta_t_hours: f64) -> Result<(), CliError> {
    let start = Utc.with_ymd_and_hms(2012, 6, 1, 0, 0, 0).single().expect("valid date").fixed_offset();
    let step = Duration::milliseconds((delta_t_hours * 3_600_000.0).round() as i64);
    let mut records = Vec::new();
    let mut ts = start;
    for e in episodes {
        for (t, &y) in e.demand_kw.iter().enumerate() {
            records.push(LoadCsvRecord {
                timestamp: ts,
                power_kw: y,
                occupancy: e.occupancy.as_ref().map(|o| o[t]),
            });
            ts += step;
        }
    }
    let mut w = create(path)?;
    write_csv(&records, &mut w).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

pub fn write_log(path: &Path, log: &[EpisodeLog]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "{LOG_HEADER}").map_err(io)?;
    for row in log {
        writeln!(w, "{},{},{},{},{}", row.episode, row.total_reward, row.epsilon, opt(row.hnet_loss), row.wall_ms).map_err(io)?;
    }
    finish(w, path)
}

/// One step of an evaluated episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub split: String,
    pub episode: usize,
    pub step: usize,
    pub demand_kw: f64,
    pub grid_kw: f64,
    pub rate_kw: f64,
    pub level: f64,
    pub occupancy: Option<u8>,
}

/// Named trajectories in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectorySet {
    pub splits: BTreeMap<String, Vec<Trajectory>>,
}

impl TrajectorySet {
    pub fn get(&self, split: &str) -> Result<&[Trajectory], CliError> {
        self.splits
            .get(split)
            .map(Vec::as_slice)
            .ok_or_else(|| CliError::Data(format!("trajectory file has no {split:?} rows")))
    }

    pub fn samples(&self, split: &str) -> Result<Vec<AttackSample>, CliError> {
        Ok(self.get(split)?.iter().map(AttackSample::from_trajectory).collect())
    }
}

pub fn write_trajectories(path: &Path, set: &[(&str, &[Trajectory])]) -> Result<(), CliError> {
    let w = create(path)?;
    let mut csv = csv::Writer::from_writer(w);
    for (split, trajs) in set {
        for (episode, t) in trajs.iter().enumerate() {
            for step in 0..t.demand_kw.len() {
                csv.serialize(TrajectoryRow {
                    split: split.to_string(),
                    episode,
                    step,
                    demand_kw: t.demand_kw[step],
                    grid_kw: t.grid_kw[step],
                    rate_kw: t.rate_kw[step],
                    level: t.levels[step],
                    occupancy: t.occupancy.as_ref().map(|o| o[step] as u8),
                })
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            }
        }
    }
    let w = csv.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    finish(w, path)
}

/// Reads a trajectory CSV. Rows must be grouped by split and episode with
/// steps in order; the reconstructed trajectories carry demand, grid load,
/// rates, levels (without the terminal level) and occupancy.
pub fn read_trajectories(path: &Path) -> Result<TrajectorySet, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut set = TrajectorySet::default();
    let mut current: Option<(String, usize, Trajectory, Vec<bool>)> = None;
    let flush = |set: &mut TrajectorySet, cur: Option<(String, usize, Trajectory, Vec<bool>)>| {
        if let Some((split, _, mut t, occ)) = cur {
            if occ.len() == t.demand_kw.len() {
                t.occupancy = Some(occ);
            }
            set.splits.entry(split).or_default().push(t);
        }
    };
    for (i, row) in reader.deserialize::<TrajectoryRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| CliError::Data(format!("{}: line {line}: {e}", path.display())))?;
        let same = matches!(&current, Some((s, e, _, _)) if *s == row.split && *e == row.episode);
        if !same {
            flush(&mut set, current.take());
            let empty = Trajectory {
                demand_kw: Vec::new(),
                grid_kw: Vec::new(),
                rate_kw: Vec::new(),
                levels: Vec::new(),
                cost_signal: Vec::new(),
                occupancy: None,
            };
            current = Some((row.split.clone(), row.episode, empty, Vec::new()));
        }
        let (_, _, t, occ) = current.as_mut().expect("set above");
        if row.step != t.demand_kw.len() {
            return Err(CliError::Data(format!("{}: line {line}: expected step {}, got {}", path.display(), t.demand_kw.len(), row.step)));
        }
        t.demand_kw.push(row.demand_kw);
        t.grid_kw.push(row.grid_kw);
        t.rate_kw.push(row.rate_kw);
        t.levels.push(row.level);
        if let Some(o) = row.occupancy {
            occ.push(o != 0);
        }
    }
    flush(&mut set, current);
    if set.splits.is_empty() {
        return Err(CliError::Data(format!("{}: no trajectory rows", path.display())));
    }
    Ok(set)
}

/// One point of the privacy-cost trade-off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub lambda: f64,
    pub backend: String,
    pub seed: u64,
    pub episodes: usize,
    pub cost_per_day: f64,
    pub ksg_mi_nats: f64,
    pub load_nmse: Option<f64>,
    pub occ_balanced_acc: Option<f64>,
}

pub fn write_tradeoff(path: &Path, rows: &[TradeoffPoint]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "{TRADEOFF_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.lambda,
            r.backend,
            r.seed,
            r.episodes,
            r.cost_per_day,
            r.ksg_mi_nats,
            opt(r.load_nmse),
            opt(r.occ_balanced_acc)
        )
        .map_err(io)?;
    }
    finish(w, path)
}

pub fn read_tradeoff(path: &Path) -> Result<Vec<TradeoffPoint>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<Result<Vec<TradeoffPoint>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Plain `header` + rows writer for small result tables.
pub fn write_table(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        writeln!(w, "{}", r.join(",")).map_err(io)?;
    }
    finish(w, path)
}
