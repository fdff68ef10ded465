//! CSV and JSON writers for the command-line tools.
//!
//! CSV floats carry 17 significant digits (exact binary64 round trip) and
//! every file opens with a comment block embedding the artifact version and
//! the full run configuration.

use crate::chain::BandedKernel;
use crate::couplings::FourPhaseRecord;
use crate::mixing::{CutoffScanRecord, MixingProfile};
use crate::verification::CheckReport;
use crate::{Error, Result};
use std::io::{BufRead, Write};

/// 17 significant digits: enough to reproduce any binary64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// The `# key: value` comment block at the top of every output file.
#[derive(Clone, Debug, Default)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut meta = Metadata::default();
        meta.push("version", env!("CARGO_PKG_VERSION"));
        meta.push("command", command);
        meta
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn write_block<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# urnmix")?;
        for (key, value) in &self.entries {
            writeln!(w, "# {key}: {value}")?;
        }
        Ok(())
    }
}

/// Banded kernel dump: `i,j,p` over every band entry, row-major.
pub fn write_kernel_csv<W: Write>(w: &mut W, kernel: &BandedKernel, meta: &Metadata) -> Result<()> {
    meta.write_block(w)?;
    writeln!(w, "i,j,p")?;
    for i in 0..=kernel.n() {
        let (lo, row) = kernel.row(i);
        for (idx, &p) in row.iter().enumerate() {
            writeln!(w, "{i},{},{}", lo + idx as u32, fmt_f64(p))?;
        }
    }
    Ok(())
}

/// Reads back `i,j,p` triples, skipping comments and the header.
pub fn read_kernel_triples<R: BufRead>(r: R) -> Result<Vec<(u32, u32, f64)>> {
    let mut triples = Vec::new();
    for line in r.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('i') {
            continue;
        }
        let mut parts = trimmed.split(',');
        let mut field = |name: &str| {
            parts
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {name} in `{trimmed}`")))
        };
        let i = field("i")?
            .parse::<u32>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        let j = field("j")?
            .parse::<u32>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        let p = field("p")?
            .parse::<f64>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        triples.push((i, j, p));
    }
    Ok(triples)
}

/// Mixing profile rows `n,k,t,d`.
pub fn write_profile_csv<W: Write>(
    w: &mut W,
    profile: &MixingProfile,
    meta: &Metadata,
) -> Result<()> {
    meta.write_block(w)?;
    writeln!(w, "n,k,t,d")?;
    for (t, d) in profile.times.iter().zip(&profile.distances) {
        writeln!(
            w,
            "{},{},{t},{}",
            profile.params.n,
            profile.params.k,
            fmt_f64(*d)
        )?;
    }
    Ok(())
}

/// Cutoff scan rows `n,k,eps,t_mix,t_star,ratio,nw_upper,nw_ok`.
pub fn write_cutoff_csv<W: Write>(
    w: &mut W,
    records: &[CutoffScanRecord],
    meta: &Metadata,
) -> Result<()> {
    meta.write_block(w)?;
    writeln!(w, "n,k,eps,t_mix,t_star,ratio,nw_upper,nw_ok")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.k,
            fmt_f64(r.eps),
            r.t_mix,
            r.t_star,
            fmt_f64(r.ratio),
            r.nw_upper,
            r.nw_ok
        )?;
    }
    Ok(())
}

/// Per-replica gap trajectories `seed,replica,t,gap`.
pub fn write_gap_paths_csv<W: Write>(
    w: &mut W,
    seed: u64,
    paths: &[Vec<u32>],
    meta: &Metadata,
) -> Result<()> {
    meta.write_block(w)?;
    writeln!(w, "seed,replica,t,gap")?;
    for (replica, path) in paths.iter().enumerate() {
        for (t, gap) in path.iter().enumerate() {
            writeln!(w, "{seed},{replica},{t},{gap}")?;
        }
    }
    Ok(())
}

fn tau_field(tau: Option<u64>) -> String {
    match tau {
        Some(t) => t.to_string(),
        None => "-1".to_string(),
    }
}

/// Four-phase records,
/// `seed,replica,tau1,tau2,tau3,tau4,censored_phase,final_gap,last_step_tv`.
pub fn write_four_phase_csv<W: Write>(
    w: &mut W,
    seed: u64,
    records: &[FourPhaseRecord],
    meta: &Metadata,
) -> Result<()> {
    meta.write_block(w)?;
    writeln!(
        w,
        "seed,replica,tau1,tau2,tau3,tau4,censored_phase,final_gap,last_step_tv"
    )?;
    for (replica, r) in records.iter().enumerate() {
        writeln!(
            w,
            "{seed},{replica},{},{},{},{},{},{},{}",
            tau_field(r.tau1),
            tau_field(r.tau2),
            tau_field(r.tau3),
            tau_field(r.tau4),
            r.censored_phase(),
            r.final_gap,
            fmt_f64(r.last_step_tv)
        )?;
    }
    Ok(())
}

/// The canonical JSON report array.
pub fn write_reports_json<W: Write>(w: &mut W, reports: &[CheckReport]) -> Result<()> {
    let json = crate::verification::reports_to_json(reports);
    w.write_all(json.as_bytes())?;
    writeln!(w)?;
    Ok(())
}
