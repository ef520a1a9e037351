//! Network file formats.
//!
//! Text: a header line `#nodes=N days=D provenance=P` followed by one link
//! per line, `host_id,neighbor_id,t_s,t_l,t_s_prime,t_l_prime[,location_tag]`.
//!
//! Binary: the magic `SPDTNET1`, then `n_nodes: u32`, `n_days: u32`,
//! `provenance: u8` (0 ingested, 1 densified, 2 synthetic), `link_count: u64`,
//! then per link `host: u32`, `neighbor: u32`, `t_s, t_l, t_s', t_l': i64`,
//! `location_tag: u64` (`u64::MAX` when absent). All little-endian.
//!
//! Both writers emit links day by day in canonical order, so a read/write
//! cycle is byte-stable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ContactNetwork, NodeId, Provenance, SpdtLink};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SPDTNET1";
const NO_TAG: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    Text,
    Binary,
}

impl NetworkFormat {
    /// `.bin` selects the binary format, anything else text.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => NetworkFormat::Binary,
            _ => NetworkFormat::Text,
        }
    }
}

pub fn write_text(net: &ContactNetwork, mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "#nodes={} days={} provenance={}",
        net.n_nodes(),
        net.n_days(),
        net.provenance().as_str()
    )?;
    for l in net.links() {
        write!(
            w,
            "{},{},{},{},{},{}",
            l.host, l.neighbor, l.host_start, l.host_end, l.nbr_start, l.nbr_end
        )?;
        match l.location_tag {
            Some(tag) => writeln!(w, ",{tag}")?,
            None => writeln!(w)?,
        }
    }
    w.flush()
}

pub fn write_binary(net: &ContactNetwork, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&net.n_nodes().to_le_bytes())?;
    w.write_all(&net.n_days().to_le_bytes())?;
    w.write_all(&[net.provenance().code()])?;
    w.write_all(&(net.link_count() as u64).to_le_bytes())?;
    for l in net.links() {
        w.write_all(&l.host.0.to_le_bytes())?;
        w.write_all(&l.neighbor.0.to_le_bytes())?;
        for t in [l.host_start, l.host_end, l.nbr_start, l.nbr_end] {
            w.write_all(&t.to_le_bytes())?;
        }
        w.write_all(&l.location_tag.unwrap_or(NO_TAG).to_le_bytes())?;
    }
    w.flush()
}

/// Forwards writes into a hasher.
struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl ContactNetwork {
    /// SHA-256 of the binary encoding, hex.
    pub fn digest(&self) -> String {
        let mut w = HashWriter(Sha256::new());
        write_binary(self, &mut w).expect("hashing cannot fail");
        hex::encode(w.0.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let w = BufWriter::new(file);
        match NetworkFormat::for_path(path) {
            NetworkFormat::Text => write_text(self, w),
            NetworkFormat::Binary => write_binary(self, w),
        }
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_network(BufReader::new(file), path)
    }
}

/// Reads either format, sniffing the binary magic. `origin` is only used in
/// error messages.
pub fn read_network(mut r: impl BufRead, origin: &Path) -> Result<ContactNetwork> {
    let head = r.fill_buf().map_err(|e| Error::io(origin, e))?;
    if head.starts_with(MAGIC) {
        read_binary(r, origin)
    } else {
        read_text(r, origin)
    }
}

fn parse_err(origin: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_text(r: impl BufRead, origin: &Path) -> Result<ContactNetwork> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(origin, e))?,
        None => return Err(parse_err(origin, 1, "missing header")),
    };
    let (mut nodes, mut days, mut prov) = (None, None, None);
    for field in header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(origin, 1, "header must start with `#`"))?
        .split_whitespace()
    {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(origin, 1, format!("bad header field `{field}`")))?;
        match key {
            "nodes" => nodes = value.parse::<u32>().ok(),
            "days" => days = value.parse::<u32>().ok(),
            "provenance" => prov = Some(Provenance::parse(value)?),
            _ => return Err(parse_err(origin, 1, format!("unknown header key `{key}`"))),
        }
    }
    let (Some(n_nodes), Some(n_days), Some(provenance)) = (nodes, days, prov) else {
        return Err(parse_err(origin, 1, "header needs nodes, days and provenance"));
    };

    let mut links = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 && fields.len() != 7 {
            return Err(parse_err(origin, lineno, "expected 6 or 7 fields"));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|e| parse_err(origin, lineno, format!("`{s}`: {e}")))
        };
        let id = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map(NodeId)
                .map_err(|e| parse_err(origin, lineno, format!("`{s}`: {e}")))
        };
        let tag = match fields.get(6) {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| parse_err(origin, lineno, format!("`{s}`: {e}")))?,
            ),
            None => None,
        };
        links.push(SpdtLink {
            host: id(fields[0])?,
            neighbor: id(fields[1])?,
            host_start: int(fields[2])?,
            host_end: int(fields[3])?,
            nbr_start: int(fields[4])?,
            nbr_end: int(fields[5])?,
            location_tag: tag,
        });
    }
    ContactNetwork::from_links(n_nodes, n_days, provenance, links)
}

fn read_binary(mut r: impl Read, origin: &Path) -> Result<ContactNetwork> {
    let io = |e| Error::io(origin, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b4).map_err(io)?;
    let n_nodes = u32::from_le_bytes(b4);
    r.read_exact(&mut b4).map_err(io)?;
    let n_days = u32::from_le_bytes(b4);
    r.read_exact(&mut b1).map_err(io)?;
    let provenance = Provenance::from_code(b1[0])?;
    r.read_exact(&mut b8).map_err(io)?;
    let count = u64::from_le_bytes(b8);

    let mut links = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut rec = [0u8; 48];
    for _ in 0..count {
        r.read_exact(&mut rec).map_err(io)?;
        let u32_at = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
        let i64_at = |o: usize| i64::from_le_bytes(rec[o..o + 8].try_into().unwrap());
        let tag = u64::from_le_bytes(rec[40..48].try_into().unwrap());
        links.push(SpdtLink {
            host: NodeId(u32_at(0)),
            neighbor: NodeId(u32_at(4)),
            host_start: i64_at(8),
            host_end: i64_at(16),
            nbr_start: i64_at(24),
            nbr_end: i64_at(32),
            location_tag: (tag != NO_TAG).then_some(tag),
        });
    }
    ContactNetwork::from_links(n_nodes, n_days, provenance, links)
}
