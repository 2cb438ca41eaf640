//! Per-round CSV metrics.

use std::io::Write;

use crate::sim::Trace;

/// One row per round: `t, signal, witnesses, m_star, e_star, color_1..color_ℓ, stable, locked`.
/// `witnesses` is the size of the witness set; the signal is `bot` or its number.
pub fn write_csv<W: Write>(trace: &Trace, out: W) -> csv::Result<()> {
    let ell = trace.scenario.instance.ell();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "t".to_string(),
        "signal".into(),
        "witnesses".into(),
        "m_star".into(),
        "e_star".into(),
    ];
    header.extend((1..=ell).map(|c| format!("color_{c}")));
    header.extend(["stable".to_string(), "locked".into()]);
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![
            r.t.to_string(),
            r.input.signal.to_string(),
            r.input.witnesses.len().to_string(),
            r.m_star.to_string(),
            r.e_star.to_string(),
        ];
        row.extend(r.color_counts.counts.iter().map(u64::to_string));
        row.extend([r.stable.to_string(), r.locked_count().to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
