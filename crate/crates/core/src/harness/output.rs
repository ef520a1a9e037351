//! Sweep CSV, replicate JSON lines and the resume journal.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{PointKey, PointResult, ReplicateRecord, SweepResult};
use crate::error::{Error, Result};
use crate::strategy::Strategy;

pub const CSV_HEADER: &str =
    "strategy,P,F,kinds,mean_outbreak,eta,over_threshold_count,mean_vaccinated,n_replicates,config_hash";

fn csv_row(p: &PointResult, hash: &str) -> String {
    let strategy = p.strategy.map_or("none", Strategy::code);
    let eta = p.eta.map_or_else(|| "NA".to_string(), |e| e.to_string());
    format!(
        "{strategy},{},{},{},{},{eta},{},{},{},{hash}",
        p.p,
        p.f,
        p.kinds.label(),
        p.mean_outbreak,
        p.over_threshold_count,
        p.mean_vaccinated,
        p.n_replicates
    )
}

/// One row per point, the unvaccinated reference first as strategy `none`.
pub fn write_csv(result: &SweepResult, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for p in &result.points {
        writeln!(w, "{}", csv_row(p, &result.config_hash))?;
    }
    w.flush()
}

/// Replicate records, one JSON object per line, in sweep order.
pub fn write_jsonl(records: &[ReplicateRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    w.flush().map_err(|e| Error::io("<jsonl>", e))
}

/// Reads replicate records; a truncated final line is ignored.
pub fn read_journal(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ReplicateRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Append-only replicate log keyed by configuration hash. Completed
/// replicates found in it are reused instead of rerun.
pub struct Journal {
    path: PathBuf,
    config_hash: String,
    done: HashMap<PointKey, ReplicateRecord>,
    writer: BufWriter<File>,
}

impl Journal {
    /// Opens or creates the journal, keeping records from runs with the same
    /// configuration hash and dropping the rest.
    pub fn open(path: &Path, config_hash: &str) -> Result<Self> {
        let previous = if path.exists() {
            read_journal(path)?
        } else {
            Vec::new()
        };
        let done: HashMap<PointKey, ReplicateRecord> = previous
            .into_iter()
            .filter(|r| r.config_hash == config_hash)
            .map(|r| (r.key(), r))
            .collect();
        // rewrite so stale or truncated lines do not linger
        let mut kept: Vec<&ReplicateRecord> = done.values().collect();
        kept.sort_by(|a, b| {
            (a.strategy, a.p.to_bits(), a.f.to_bits(), a.replicate)
                .cmp(&(b.strategy, b.p.to_bits(), b.f.to_bits(), b.replicate))
        });
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        for r in kept {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Journal {
            path: path.to_path_buf(),
            config_hash: config_hash.to_string(),
            done,
            writer: BufWriter::new(file),
        })
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    pub fn get(&self, strategy: Option<Strategy>, p: f64, f: f64, replicate: u32) -> Option<&ReplicateRecord> {
        self.done.get(&PointKey::new(strategy, p, f, replicate))
    }

    pub fn append(&mut self, records: &[ReplicateRecord]) -> Result<()> {
        for r in records {
            if r.config_hash != self.config_hash {
                return Err(Error::Data("journal record from a different configuration".into()));
            }
            let key = r.key();
            if self.done.contains_key(&key) {
                continue;
            }
            serde_json::to_writer(&mut self.writer, r)?;
            self.writer
                .write_all(b"\n")
                .map_err(|e| Error::io(&self.path, e))?;
            self.done.insert(key, r.clone());
        }
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }

    /// Replaces the journal with `records` in the given order.
    pub fn finish(self, records: &[ReplicateRecord]) -> Result<()> {
        drop(self.writer);
        let file = File::create(&self.path).map_err(|e| Error::io(&self.path, e))?;
        write_jsonl(records, BufWriter::new(file))
    }
}
