//! CSV series and checksums.
//!
//! Every CSV starts with a `# format_version=N` comment line followed by a
//! fixed header. Floats are written with Rust's shortest round-trip
//! formatting, so reading a file back reproduces the values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::propagator::ComponentWeights;
use crate::reduction::TrialRecord;
use crate::state::Grid1D;

pub const CSV_FORMAT_VERSION: u32 = 1;
pub const WEIGHTS_HEADER: &str = "time,p_no_capture,p_capture,current";
pub const TRIALS_HEADER: &str = "seed,rule,collapse_time,chosen,p_capture_at_collapse,current_at_collapse,flags";
pub const SNAPSHOTS_HEADER: &str = "time,x,density";

fn version_line() -> String {
    format!("# format_version={CSV_FORMAT_VERSION}\n")
}

pub fn weights_csv(weights: &ComponentWeights) -> String {
    let mut s = version_line();
    s.push_str(WEIGHTS_HEADER);
    s.push('\n');
    for i in 0..weights.len() {
        writeln!(
            s,
            "{},{},{},{}",
            weights.times[i], weights.p_no_capture[i], weights.p_capture[i], weights.current[i]
        )
        .unwrap();
    }
    s
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut s = version_line();
    s.push_str(TRIALS_HEADER);
    s.push('\n');
    for r in records {
        let t = r.collapse_time.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.rule,
            t,
            r.chosen.as_str(),
            r.p_capture_at_collapse,
            r.current_at_collapse,
            r.flags
        )
        .unwrap();
    }
    s
}

pub fn snapshots_csv(grid: &Grid1D, snapshots: &[(f64, Vec<f64>)]) -> String {
    let mut s = version_line();
    s.push_str(SNAPSHOTS_HEADER);
    s.push('\n');
    for (t, density) in snapshots {
        for (x, d) in grid.coordinates().zip(density) {
            writeln!(s, "{t},{x},{d}").unwrap();
        }
    }
    s
}

/// Data rows of a versioned CSV after checking the version line and header.
fn data_rows<'a>(text: &'a str, header: &str, path: &Path) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# format_version={CSV_FORMAT_VERSION}") => {}
        other => {
            return Err(bad(format!(
                "expected '# format_version={CSV_FORMAT_VERSION}', found {:?}",
                other.map(|(_, l)| l)
            )))
        }
    }
    match lines.next() {
        Some((_, l)) if l.trim() == header => {}
        other => return Err(bad(format!("expected header '{header}', found {:?}", other.map(|(_, l)| l)))),
    }
    Ok(lines.filter(|(_, l)| !l.trim().is_empty()))
}

pub fn parse_weights_csv(text: &str, path: &Path) -> Result<ComponentWeights> {
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (n, line) in data_rows(text, WEIGHTS_HEADER, path)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: expected 4 fields, found {}", n + 1, fields.len()),
            });
        }
        for (col, f) in cols.iter_mut().zip(&fields) {
            col.push(f.trim().parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: '{f}' is not a number", n + 1),
            })?);
        }
    }
    let [t, p0, p1, j] = cols;
    ComponentWeights::new(t, p0, p1, j)
}

pub fn read_weights_csv(path: &Path) -> Result<ComponentWeights> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weights_csv(&text, path)
}

pub fn parse_trials_csv(text: &str, path: &Path) -> Result<Vec<TrialRecord>> {
    let bad = |n: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {}: {message}", n + 1),
    };
    let mut out = Vec::new();
    for (n, line) in data_rows(text, TRIALS_HEADER, path)? {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(n, format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, format!("'{s}' is not a number")));
        out.push(TrialRecord {
            seed: f[0].parse().map_err(|_| bad(n, format!("bad seed '{}'", f[0])))?,
            rule: f[1].parse()?,
            collapse_time: if f[2].is_empty() { None } else { Some(num(f[2])?) },
            chosen: f[3].parse()?,
            p_capture_at_collapse: num(f[4])?,
            current_at_collapse: num(f[5])?,
            flags: f[6].parse()?,
        });
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{Component, Flags, RuleKind};

    #[test]
    fn weights_round_trip_bit_exact() {
        let w = ComponentWeights::new(
            vec![0.0, 0.1, 0.30000000000000004],
            vec![1.0, 0.9999999999, 0.5],
            vec![0.0, 1e-10, 0.5],
            vec![0.0, 3.3e-9, 1.0 / 3.0],
        )
        .unwrap();
        let text = weights_csv(&w);
        assert!(text.starts_with("# format_version=1\ntime,p_no_capture,p_capture,current\n"));
        assert_eq!(parse_weights_csv(&text, Path::new("w.csv")).unwrap(), w);
    }

    #[test]
    fn trials_round_trip() {
        let recs = vec![
            TrialRecord {
                rule: RuleKind::CurrentJump,
                collapse_time: None,
                chosen: Component::NoCapture,
                p_capture_at_collapse: 0.25,
                current_at_collapse: 0.0,
                flags: Flags::default(),
                seed: 3,
            },
            TrialRecord {
                rule: RuleKind::PenroseSpread,
                collapse_time: Some(12.5),
                chosen: Component::Capture,
                p_capture_at_collapse: 0.5,
                current_at_collapse: 1e-12,
                flags: Flags {
                    zero_current_collapse: true,
                    between_pulses: true,
                    ..Default::default()
                },
                seed: 4,
            },
        ];
        let text = trials_csv(&recs);
        assert_eq!(parse_trials_csv(&text, Path::new("t.csv")).unwrap(), recs);
    }

    #[test]
    fn rejects_wrong_version_or_header() {
        let p = Path::new("x.csv");
        assert!(parse_weights_csv("time,p_no_capture,p_capture,current\n", p).is_err());
        assert!(parse_weights_csv("# format_version=2\ntime,p_no_capture,p_capture,current\n", p).is_err());
        assert!(parse_weights_csv("# format_version=1\ntime,p\n", p).is_err());
        assert!(parse_weights_csv("# format_version=1\ntime,p_no_capture,p_capture,current\n0,1,0\n", p).is_err());
    }

    #[test]
    fn checksum_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
