//! CSV reports. Every row starts with the schema version.

use std::io::{Read, Write};

use thiserror::Error;

use crate::experiment::{CompareRow, CompareSummary, MeanReport};
use crate::metrics::{GapRow, MetricsReport};

pub const CSV_SCHEMA_VERSION: &str = "1.0";

pub const COMPARE_HEADER: [&str; 10] = [
    "schema_version",
    "archetype",
    "policy",
    "seed",
    "HOTA",
    "DetA",
    "AssA",
    "J",
    "F",
    "IDSW",
];

pub const GAP_HEADER: [&str; 7] = [
    "schema_version",
    "n",
    "seeds",
    "delta_HOTA",
    "delta_HOTA_se",
    "delta_IDSW",
    "delta_IDSW_se",
];

pub const METRICS_HEADER: [&str; 8] = [
    "schema_version",
    "HOTA",
    "DetA",
    "AssA",
    "J",
    "F",
    "JF",
    "IDSW",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported report schema version {0}")]
    SchemaVersionMismatch(String),
    #[error("report has no schema_version column")]
    MissingVersion,
}

fn real(x: f64) -> String {
    format!("{x}")
}

pub fn write_compare<W: Write>(
    out: W,
    rows: &[CompareRow],
    summary: &CompareSummary,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_HEADER)?;
    for r in rows {
        let m = &r.report;
        w.write_record([
            CSV_SCHEMA_VERSION.to_string(),
            r.archetype.clone(),
            r.policy.to_string(),
            r.seed.to_string(),
            real(m.hota),
            real(m.deta),
            real(m.assa),
            real(m.j),
            real(m.f),
            m.idsw.to_string(),
        ])?;
    }
    let archetype = rows.first().map(|r| r.archetype.as_str()).unwrap_or("");
    for (label, m) in [
        ("coupled", &summary.coupled),
        ("decoupled", &summary.decoupled),
        ("delta", &summary.delta),
    ] {
        w.write_record(summary_record(archetype, label, m))?;
    }
    w.flush()?;
    Ok(())
}

fn summary_record(archetype: &str, label: &str, m: &MeanReport) -> [String; 10] {
    [
        CSV_SCHEMA_VERSION.to_string(),
        archetype.to_string(),
        label.to_string(),
        "mean".to_string(),
        real(m.hota),
        real(m.deta),
        real(m.assa),
        real(m.j),
        real(m.f),
        real(m.idsw),
    ]
}

pub fn write_gap_table<W: Write>(out: W, rows: &[GapRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GAP_HEADER)?;
    for r in rows {
        w.write_record([
            CSV_SCHEMA_VERSION.to_string(),
            r.n.to_string(),
            r.seeds.to_string(),
            real(r.delta_hota),
            real(r.delta_hota_se),
            real(r.delta_idsw),
            real(r.delta_idsw_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(out: W, m: &MetricsReport) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    w.write_record([
        CSV_SCHEMA_VERSION.to_string(),
        real(m.hota),
        real(m.deta),
        real(m.assa),
        real(m.j),
        real(m.f),
        real(m.jf),
        m.idsw.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Reads any report back as header plus string rows, rejecting files whose
/// schema major version differs from this build's.
pub fn read_table<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<String>>), ReportError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = header
        .iter()
        .position(|h| h == "schema_version")
        .ok_or(ReportError::MissingVersion)?;
    let major = |v: &str| v.split('.').next().unwrap_or(v).to_string();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec.get(col).unwrap_or("");
        if major(v) != major(CSV_SCHEMA_VERSION) {
            return Err(ReportError::SchemaVersionMismatch(v.to_string()));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::summarize;
    use crate::policy::PolicyKind;

    fn report(hota: f64, idsw: u64) -> MetricsReport {
        MetricsReport {
            j: 0.9,
            f: 0.8,
            jf: 0.85,
            hota,
            deta: 0.7,
            assa: 0.6,
            idsw,
        }
    }

    #[test]
    fn compare_has_data_and_summary_rows() {
        let rows: Vec<_> = PolicyKind::ALL
            .iter()
            .flat_map(|&policy| {
                (0..20).map(move |seed| CompareRow {
                    archetype: "reentry".into(),
                    policy,
                    seed,
                    report: report(0.5, if policy == PolicyKind::Coupled { 1 } else { 0 }),
                })
            })
            .collect();
        let mut buf = Vec::new();
        write_compare(&mut buf, &rows, &summarize(&rows)).unwrap();
        let (header, body) = read_table(&buf[..]).unwrap();
        assert_eq!(header, COMPARE_HEADER);
        assert_eq!(body.len(), 43);
        let delta = &body[42];
        assert_eq!(&delta[2], "delta");
        assert_eq!(&delta[9], "-1");
    }

    #[test]
    fn reals_round_trip() {
        let m = report(1.0 / 3.0, 0);
        let mut buf = Vec::new();
        write_metrics(&mut buf, &m).unwrap();
        let (_, body) = read_table(&buf[..]).unwrap();
        assert_eq!(body[0][1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn newer_major_version_rejected() {
        let text = "schema_version,n\n2.0,3\n";
        assert!(matches!(
            read_table(text.as_bytes()),
            Err(ReportError::SchemaVersionMismatch(_))
        ));
        assert!(matches!(
            read_table("n\n3\n".as_bytes()),
            Err(ReportError::MissingVersion)
        ));
    }
}
