//! Instance file format, version 1.
//!
//! ```text
//! format vrpagent-instance 1
//! kind cvrp
//! nodes 3
//! capacity 50
//! node id x y demand tw_start tw_end service prize
//! 0 0.5 0.5 0 0 inf 0 0
//! 1 0.25 0.75 3 0 inf 0 0
//! 2 0.125 0.0625 7 0 inf 0 0
//! checksum sha256 <64 hex digits>
//! ```
//!
//! Floats are written in Rust's shortest round-trip decimal form, so a
//! load reproduces every coordinate exactly and therefore the distance
//! matrix bit-for-bit. The checksum covers every byte before the checksum
//! line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instance::{Instance, Node};

pub const FORMAT_TAG: &str = "vrpagent-instance";
pub const FORMAT_VERSION: &str = "1";
const NODE_HEADER: &str = "node id x y demand tw_start tw_end service prize";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Serializes `instance` to the v1 text format.
pub fn to_text(instance: &Instance) -> String {
    let mut body = String::new();
    let _ = writeln!(body, "format {FORMAT_TAG} {FORMAT_VERSION}");
    let _ = writeln!(body, "kind {}", instance.kind());
    let _ = writeln!(body, "nodes {}", instance.num_nodes());
    let _ = writeln!(body, "capacity {}", instance.capacity());
    let _ = writeln!(body, "{NODE_HEADER}");
    for (id, n) in instance.nodes().iter().enumerate() {
        let _ = writeln!(
            body,
            "{id} {} {} {} {} {} {} {}",
            n.x, n.y, n.demand, n.tw_start, n.tw_end, n.service, n.prize
        );
    }
    let checksum = sha256_hex(body.as_bytes());
    let _ = writeln!(body, "checksum sha256 {checksum}");
    body
}

/// Checksum recorded in a serialized instance.
pub fn checksum_of(instance: &Instance) -> String {
    let text = to_text(instance);
    text.lines().last().and_then(|l| l.rsplit(' ').next()).unwrap_or_default().to_string()
}

pub fn save(instance: &Instance, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let text = to_text(instance);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().last().and_then(|l| l.rsplit(' ').next()).unwrap_or_default().to_string())
}

pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}

pub fn from_text(text: &str, path: &Path) -> Result<Instance> {
    let malformed = |line: usize, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.split_inclusive('\n').enumerate().map(|(i, l)| (i + 1, l));
    let consumed = std::cell::Cell::new(0usize);

    let mut next_line = |what: &str| -> Result<(usize, &str)> {
        match lines.next() {
            Some((no, raw)) => {
                consumed.set(consumed.get() + raw.len());
                Ok((no, raw.trim_end_matches(['\n', '\r'])))
            }
            None => Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: text.lines().count() + 1,
                reason: format!("expected {what}, found end of file"),
            }),
        }
    };

    let (no, line) = next_line("format header")?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some("format") || parts.next() != Some(FORMAT_TAG) {
        return Err(malformed(no, "missing `format vrpagent-instance` header".into()));
    }
    let version = parts.next().unwrap_or_default();
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version.to_string(),
        });
    }

    let (no, line) = next_line("kind")?;
    let kind = line
        .strip_prefix("kind ")
        .ok_or_else(|| malformed(no, "expected `kind <cvrp|vrptw|pcvrp>`".into()))?
        .trim()
        .parse()
        .map_err(|_| malformed(no, format!("unknown kind in `{line}`")))?;

    let (no, line) = next_line("node count")?;
    let count: usize = line
        .strip_prefix("nodes ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| malformed(no, "expected `nodes <count>`".into()))?;
    let (no, line) = next_line("capacity")?;
    let capacity: u32 = line
        .strip_prefix("capacity ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| malformed(no, "expected `capacity <integer>`".into()))?;
    let (no, line) = next_line("node table header")?;
    if line.trim() != NODE_HEADER {
        return Err(malformed(no, "expected node table header".into()));
    }

    let mut nodes = Vec::with_capacity(count);
    for expected_id in 0..count {
        let (no, line) = next_line("node row")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(malformed(no, format!("expected 8 fields, found {}", fields.len())));
        }
        let id: usize = fields[0].parse().map_err(|_| malformed(no, format!("bad id `{}`", fields[0])))?;
        if id != expected_id {
            return Err(malformed(no, format!("expected node id {expected_id}, found {id}")));
        }
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| malformed(no, format!("bad number `{}`", fields[i])))
        };
        let demand: u32 = fields[3]
            .parse()
            .map_err(|_| malformed(no, format!("bad demand `{}`", fields[3])))?;
        nodes.push(Node {
            x: float(1)?,
            y: float(2)?,
            demand,
            tw_start: float(4)?,
            tw_end: float(5)?,
            service: float(6)?,
            prize: float(7)?,
        });
    }

    let body_len = consumed.get();
    let (no, line) = next_line("checksum line")?;
    let recorded = line
        .strip_prefix("checksum sha256 ")
        .map(str::trim)
        .ok_or_else(|| malformed(no, "expected `checksum sha256 <hex>`".into()))?;
    let computed = sha256_hex(&text.as_bytes()[..body_len]);
    if recorded != computed {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            recorded: recorded.to_string(),
            computed,
        });
    }

    Instance::new(kind, capacity, nodes).map_err(|e| match e {
        Error::InvalidInstance(reason) => malformed(no, reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GenParams};
    use crate::instance::ProblemKind;

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in ProblemKind::ALL {
            let inst = generate(&GenParams::new(kind, 40, 11)).unwrap();
            let text = to_text(&inst);
            let back = from_text(&text, Path::new("mem")).unwrap();
            assert_eq!(back.nodes(), inst.nodes());
            for i in 0..inst.num_nodes() {
                for j in 0..inst.num_nodes() {
                    assert_eq!(back.dist(i, j).to_bits(), inst.dist(i, j).to_bits());
                }
            }
            assert_eq!(to_text(&back), text);
        }
    }

    #[test]
    fn truncated_file_reports_line() {
        let inst = generate(&GenParams::new(ProblemKind::Cvrp, 10, 1)).unwrap();
        let text = to_text(&inst);
        let cut: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        match from_text(&cut, Path::new("t.txt")) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 10),
            other => panic!("unexpected {other:?}"),
        }
        let half = &text[..text.len() / 2];
        assert!(matches!(from_text(half, Path::new("t.txt")), Err(Error::MalformedRow { .. })));
    }

    #[test]
    fn tampered_value_fails_checksum() {
        let inst = generate(&GenParams::new(ProblemKind::Cvrp, 10, 1)).unwrap();
        let text = to_text(&inst).replacen("capacity 50", "capacity 51", 1);
        assert!(matches!(from_text(&text, Path::new("t")), Err(Error::Checksum { .. })));
    }

    #[test]
    fn wrong_version() {
        let inst = generate(&GenParams::new(ProblemKind::Cvrp, 3, 1)).unwrap();
        let text = to_text(&inst).replacen("vrpagent-instance 1", "vrpagent-instance 2", 1);
        assert!(matches!(from_text(&text, Path::new("t")), Err(Error::VersionMismatch { .. })));
    }
}
