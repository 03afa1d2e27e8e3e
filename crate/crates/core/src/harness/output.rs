//! CSV emission and parsing.

use std::io::Write;

use crate::bandit::RegretRecord;
use crate::error::{Error, Result};
use crate::harness::runner::{DistanceRecord, GammaRecord};

pub const RESULT_HEADER: &str =
    "replication,task,agent,expected_simple_regret,realized_simple_regret,cumulative_regret,seed_fp";
pub const GAMMA_HEADER: &str = "replication,task,agent,gamma";
pub const DISTANCE_HEADER: &str = "replication,task,agent,kl,pinsker_tv_bound,exact_tv";

/// Fixed-point decimal with 17 significant digits, enough to round-trip
/// any `f64`.
pub fn format_sig17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return format!("{:.16}", 0.0);
    }
    let sci = format!("{x:.16e}");
    let exponent: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("scientific formatting always has an exponent");
    let decimals = (16 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

fn check_agent_tag(tag: &str) -> Result<()> {
    if tag.contains([',', '\n', '"']) {
        return Err(Error::precondition(format!(
            "agent tag `{tag}` cannot be written to CSV"
        )));
    }
    Ok(())
}

pub fn write_results<W: Write>(rows: &[RegretRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for r in rows {
        check_agent_tag(&r.agent)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{:016x}",
            r.replication,
            r.task,
            r.agent,
            format_sig17(r.expected_simple_regret),
            format_sig17(r.realized_simple_regret),
            format_sig17(r.cumulative_regret),
            r.task_fingerprint
        )?;
    }
    Ok(())
}

pub fn write_gammas<W: Write>(rows: &[GammaRecord], mut out: W) -> Result<()> {
    writeln!(out, "{GAMMA_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.replication,
            r.task,
            r.agent,
            format_sig17(r.gamma)
        )?;
    }
    Ok(())
}

pub fn write_distances<W: Write>(rows: &[DistanceRecord], mut out: W) -> Result<()> {
    writeln!(out, "{DISTANCE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.replication,
            r.task,
            r.agent,
            format_sig17(r.report.kl),
            format_sig17(r.report.pinsker_tv_bound),
            r.report.exact_tv.map(format_sig17).unwrap_or_default()
        )?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Parse {
        line,
        message: format!("{name} `{value}`: {e}"),
    })
}

/// Parses a result file. Any malformed row is rejected with its line number.
pub fn read_results(text: &str) -> Result<Vec<RegretRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == RESULT_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header `{header}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty result file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Parse {
                line,
                message: format!("expected 7 fields, got {}", parts.len()),
            });
        }
        let task: usize = field(parts[1], "task", line)?;
        if task == 0 {
            return Err(Error::Parse {
                line,
                message: "task numbers start at 1".into(),
            });
        }
        if parts[2].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty agent tag".into(),
            });
        }
        let mut values = [0.0f64; 3];
        for (v, (text, name)) in values.iter_mut().zip(parts[3..6].iter().zip([
            "expected_simple_regret",
            "realized_simple_regret",
            "cumulative_regret",
        ])) {
            *v = field(text, name, line)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("{name} is not finite"),
                });
            }
        }
        let fingerprint = u64::from_str_radix(parts[6], 16).map_err(|e| Error::Parse {
            line,
            message: format!("seed_fp `{}`: {e}", parts[6]),
        })?;
        rows.push(RegretRecord {
            replication: field(parts[0], "replication", line)?,
            task,
            agent: parts[2].to_string(),
            expected_simple_regret: values[0],
            realized_simple_regret: values[1],
            cumulative_regret: values[2],
            task_fingerprint: fingerprint,
        });
    }
    Ok(rows)
}
