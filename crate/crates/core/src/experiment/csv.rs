//! CSV files written and read by the experiment commands.
//!
//! Every file starts with a `# config_hash=<hex> seed=<n>` comment line,
//! followed by a header row. Symbol indices are written one-based.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::batch::SymbolBatch;
use crate::channel::ChannelKind;
use crate::constellation::{Constellation, ShapingDistribution};
use crate::experiment::{Scheme, SweepRow};
use crate::receiver::PassHistogram;
use crate::{Error, Result};

pub const SWEEP_HEADER: [&str; 7] = ["scheme", "channel", "snr_db", "mi_bits", "ser", "entropy_tx", "seed"];

/// Identifies the run a file came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }

    /// Parses the comment line written by [`Provenance::comment`].
    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix('#')?.trim();
        let mut hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self { config_hash: hash?, seed: seed? })
    }
}

/// Buffered writer that has already emitted the comment and header lines.
fn writer<W: Write>(w: W, prov: &Provenance, header: &[&str]) -> Result<BufWriter<W>> {
    let mut out = BufWriter::new(w);
    writeln!(out, "{}", prov.comment())?;
    writeln!(out, "{}", header.join(","))?;
    Ok(out)
}

fn record<W: Write>(out: &mut W, fields: &[String]) -> Result<()> {
    writeln!(out, "{}", fields.join(","))?;
    Ok(())
}

fn finish<W: Write>(mut out: BufWriter<W>) -> Result<()> {
    out.flush()?;
    Ok(())
}

pub fn write_training_log<W: Write>(w: W, prov: &Provenance, losses: &[f64]) -> Result<()> {
    let mut out = writer(w, prov, &["step", "loss"])?;
    for (k, loss) in losses.iter().enumerate() {
        record(&mut out, &[(k + 1).to_string(), loss.to_string()])?;
    }
    finish(out)
}

pub fn write_distribution<W: Write>(
    w: W,
    prov: &Provenance,
    c: &Constellation,
    dist: &ShapingDistribution,
) -> Result<()> {
    let mut out = writer(w, prov, &["symbol_index", "i", "q", "probability"])?;
    for (k, (p, prob)) in c.points().iter().zip(dist.probs()).enumerate() {
        record(&mut out, &[(k + 1).to_string(), p.i.to_string(), p.q.to_string(), prob.to_string()])?;
    }
    finish(out)
}

pub fn write_sweep<W: Write>(w: W, prov: &Provenance, rows: &[SweepRow]) -> Result<()> {
    let mut out = writer(w, prov, &SWEEP_HEADER)?;
    for r in rows {
        record(
            &mut out,
            &[
                r.scheme.to_string(),
                r.channel.to_string(),
                r.snr_db.to_string(),
                r.mi_bits.to_string(),
                r.ser.to_string(),
                r.entropy_tx.to_string(),
                r.seed.to_string(),
            ],
        )?;
    }
    finish(out)
}

/// `i,q,symbol_index`, plus a `vote_share` column when more than one pass was run.
pub fn write_reconstruction<W: Write>(
    w: W,
    prov: &Provenance,
    y: &SymbolBatch,
    indices: &[usize],
    votes: Option<&PassHistogram>,
) -> Result<()> {
    let multi = votes.filter(|h| h.passes > 1);
    let header: &[&str] =
        if multi.is_some() { &["i", "q", "symbol_index", "vote_share"] } else { &["i", "q", "symbol_index"] };
    let mut out = writer(w, prov, header)?;
    for (row, (p, &k)) in y.points().zip(indices).enumerate() {
        let mut rec = vec![p.i.to_string(), p.q.to_string(), (k + 1).to_string()];
        if let Some(h) = multi {
            rec.push((f64::from(h.counts[row][k]) / h.passes as f64).to_string());
        }
        record(&mut out, &rec)?;
    }
    finish(out)
}

/// Data records with their one-based line numbers. Comment lines, blank
/// lines and a leading header row are skipped.
fn records<R: Read>(r: R, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    let mut seen_header = false;
    for (k, line) in BufReader::new(r).lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::Csv { line: line_no, message: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if !seen_header {
            seen_header = true;
            if rec.iter().map(String::as_str).eq(header.iter().copied()) {
                continue;
            }
        }
        if rec.len() != header.len() {
            return Err(Error::Csv {
                line: line_no,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line_no, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &[String], k: usize, name: &str, line: usize) -> Result<T> {
    rec[k].parse().map_err(|_| Error::Csv { line, message: format!("bad {name} value {:?}", rec[k]) })
}

/// Received samples from `i,q` rows. The header row is optional.
pub fn read_iq<R: Read>(r: R) -> Result<SymbolBatch> {
    let mut rows = Vec::new();
    for (line, rec) in records(r, &["i", "q"])? {
        let i: f64 = field(&rec, 0, "i", line)?;
        let q: f64 = field(&rec, 1, "q", line)?;
        if !(i.is_finite() && q.is_finite()) {
            return Err(Error::Csv { line, message: "non-finite sample".into() });
        }
        rows.push([i, q]);
    }
    if rows.is_empty() {
        return Err(Error::Csv { line: 0, message: "no samples".into() });
    }
    SymbolBatch::from_rows(&rows)
}

pub fn write_iq<W: Write>(w: W, prov: &Provenance, y: &SymbolBatch) -> Result<()> {
    let mut out = writer(w, prov, &["i", "q"])?;
    for p in y.points() {
        record(&mut out, &[p.i.to_string(), p.q.to_string()])?;
    }
    finish(out)
}

pub fn read_sweep<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    records(r, &SWEEP_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let scheme: Scheme = rec[0]
                .parse()
                .map_err(|_| Error::Csv { line, message: format!("bad scheme {:?}", rec[0]) })?;
            let channel: ChannelKind = rec[1]
                .parse()
                .map_err(|_| Error::Csv { line, message: format!("bad channel {:?}", rec[1]) })?;
            Ok(SweepRow {
                scheme,
                channel,
                snr_db: field(&rec, 2, "snr_db", line)?,
                mi_bits: field(&rec, 3, "mi_bits", line)?,
                ser: field(&rec, 4, "ser", line)?,
                entropy_tx: field(&rec, 5, "entropy_tx", line)?,
                seed: field(&rec, 6, "seed", line)?,
            })
        })
        .collect()
}
