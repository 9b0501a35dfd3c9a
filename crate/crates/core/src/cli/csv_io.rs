use std::collections::HashMap;
use std::path::Path;

use crate::diagnostics::SummaryRow;
use crate::error::{Error, Result};
use crate::gibbs::{ChainDraws, ChainStore};
use crate::model::{Cluster, Dataset, ModelSpec};
use crate::sim::{MetricsTable, ReplicationResult};

use super::config::CsvSchema;

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Input(format!("column '{name}' not found in header")))
}

fn parse_number(raw: &str, na: &str, col: &str, line: u64) -> Result<Option<f64>> {
    if raw == na {
        return Ok(None);
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Input(format!("line {line}, column '{col}': '{raw}' is not a finite number")))
}

/// Merges a cluster-level value seen on one row into the cluster's value.
fn merge<T: PartialEq + std::fmt::Debug>(
    slot: &mut Option<T>,
    value: Option<T>,
    cluster: &str,
    col: &str,
) -> Result<()> {
    match (slot.as_ref(), value) {
        (_, None) => Ok(()),
        (None, Some(v)) => {
            *slot = Some(v);
            Ok(())
        }
        (Some(old), Some(v)) if *old == v => Ok(()),
        (Some(old), Some(v)) => Err(Error::Input(format!(
            "cluster '{cluster}': cluster-level column '{col}' is not constant ({old:?} vs {v:?})"
        ))),
    }
}

/// Parses long-format CSV text (one row per level-1 unit) into clusters,
/// in order of first appearance. Lines starting with `#` are skipped.
pub fn parse_csv(text: &str, schema: &CsvSchema, spec: &ModelSpec) -> Result<Dataset> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, &schema.cluster)?;
    let y_col = column(&headers, &schema.outcome)?;
    let c_cols = spec.continuous.iter().map(|n| column(&headers, n)).collect::<Result<Vec<_>>>()?;
    let d_cols = spec.categorical.iter().map(|v| column(&headers, &v.name)).collect::<Result<Vec<_>>>()?;
    let x_cols = spec.level1.iter().map(|n| column(&headers, n)).collect::<Result<Vec<_>>>()?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(id_col).unwrap_or_default().to_string();
        if id.is_empty() || id == schema.na {
            return Err(Error::Input(format!("line {line}: missing cluster id")));
        }
        let j = *index.entry(id.clone()).or_insert_with(|| {
            clusters.push(Cluster {
                id: id.clone(),
                y: Vec::new(),
                x: Vec::new(),
                c: vec![None; spec.p()],
                d: vec![None; spec.q()],
            });
            clusters.len() - 1
        });
        let cl = &mut clusters[j];
        let field = |col: usize| record.get(col).unwrap_or_default();

        cl.y.push(parse_number(field(y_col), &schema.na, &schema.outcome, line)?);
        let mut x = Vec::with_capacity(x_cols.len());
        for (&col, name) in x_cols.iter().zip(&spec.level1) {
            x.push(parse_number(field(col), &schema.na, name, line)?.ok_or_else(|| {
                Error::Input(format!("line {line}: level-1 covariate '{name}' must be observed"))
            })?);
        }
        cl.x.push(x);
        for (k, (&col, name)) in c_cols.iter().zip(&spec.continuous).enumerate() {
            let v = parse_number(field(col), &schema.na, name, line)?;
            merge(&mut cl.c[k], v, &cl.id, name)?;
        }
        for (v, (&col, var)) in d_cols.iter().zip(&spec.categorical).enumerate() {
            let raw = field(col);
            let level = if raw == schema.na {
                None
            } else {
                Some(var.levels.iter().position(|l| l == raw).ok_or_else(|| {
                    Error::Input(format!(
                        "line {line}: unknown level '{raw}' for '{}' (declared: {})",
                        var.name,
                        var.levels.join(", ")
                    ))
                })?)
            };
            merge(&mut cl.d[v], level, &cl.id, &var.name)?;
        }
    }
    if clusters.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    let data = Dataset::new(clusters);
    data.validate(spec)?;
    Ok(data)
}

/// Reads and parses a long-format CSV file.
pub fn load_csv(path: &Path, schema: &CsvSchema, spec: &ModelSpec) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema, spec)
}

fn finish(header: &str, wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let body = wtr.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(format!("{header}{}", String::from_utf8(body).expect("csv output is utf-8")))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Long-format CSV of `data`: cluster, outcome, continuous, categorical,
/// level-1 columns.
pub fn dataset_csv(data: &Dataset, schema: &CsvSchema, spec: &ModelSpec, header: &str) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut head = vec![schema.cluster.clone(), schema.outcome.clone()];
    head.extend(spec.continuous.iter().cloned());
    head.extend(spec.categorical.iter().map(|v| v.name.clone()));
    head.extend(spec.level1.iter().cloned());
    wtr.write_record(&head)?;
    let na = || schema.na.clone();
    for cl in &data.clusters {
        for (y, x) in cl.y.iter().zip(&cl.x) {
            let mut row = vec![cl.id.clone(), y.map_or_else(na, |v| v.to_string())];
            row.extend(cl.c.iter().map(|c| c.map_or_else(na, |v| v.to_string())));
            row.extend(
                cl.d.iter()
                    .zip(&spec.categorical)
                    .map(|(d, var)| d.map_or_else(na, |l| var.levels[l].clone())),
            );
            row.extend(x.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
    }
    finish(header, wtr)
}

/// One row per parameter; `psrf_flag` is `*` above `threshold`.
pub fn summary_csv(rows: &[SummaryRow], threshold: f64, header: &str) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["parameter", "estimate", "se", "ci_lo", "ci_hi", "psrf", "psrf_flag"])?;
    for r in rows {
        let flag = if r.psrf.is_some_and(|v| !(v <= threshold)) { "*" } else { "" };
        wtr.write_record([
            r.name.clone(),
            r.posterior_mean.to_string(),
            r.posterior_sd.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            opt(r.psrf),
            flag.to_string(),
        ])?;
    }
    finish(header, wtr)
}

/// Every kept draw: `chain, draw, <parameters>`.
pub fn chains_csv(store: &ChainStore, header: &str) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["chain".to_string(), "draw".to_string()];
    head.extend(store.names.iter().cloned());
    wtr.write_record(&head)?;
    for c in 0..store.n_chains() {
        for r in 0..store.n_records(c) {
            let mut row = vec![c.to_string(), r.to_string()];
            row.extend(store.record(c, r).iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
    }
    finish(header, wtr)
}

/// Inverse of [`chains_csv`].
pub fn parse_chains_csv(text: &str) -> Result<ChainStore> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "draw" {
        return Err(Error::Input("chains file must start with 'chain,draw' columns".into()));
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut chains: Vec<ChainDraws> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let c: usize = record[0]
            .parse()
            .map_err(|_| Error::Input(format!("line {line}: bad chain index '{}'", &record[0])))?;
        if c >= chains.len() {
            chains.resize_with(c + 1, ChainDraws::default);
        }
        for (i, raw) in record.iter().skip(2).enumerate() {
            let v = parse_number(raw, "NA", &names[i], line)?
                .ok_or_else(|| Error::Input(format!("line {line}: missing draw")))?;
            chains[c].values.push(v);
        }
    }
    if chains.is_empty() || chains.iter().any(|ch| ch.values.is_empty()) {
        return Err(Error::Input("chains file has no draws for some chain".into()));
    }
    Ok(ChainStore { names, latent_names: Vec::new(), chains })
}

/// Metric table with a combined `pct_bias(ase)` column.
pub fn metrics_csv(table: &MetricsTable, header: &str) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "parameter",
        "truth",
        "mean_estimate",
        "pct_bias",
        "mc_se_pct_bias",
        "ase",
        "ese",
        "coverage",
        "pct_bias_ase",
    ])?;
    for r in &table.rows {
        let combined = match r.ase {
            Some(a) => format!("{:.1}({:.2})", r.pct_bias, a),
            None => format!("{:.1}", r.pct_bias),
        };
        wtr.write_record([
            r.name.clone(),
            r.truth.to_string(),
            r.mean_estimate.to_string(),
            r.pct_bias.to_string(),
            r.mc_se_pct_bias.to_string(),
            opt(r.ase),
            r.ese.to_string(),
            opt(r.coverage),
            combined,
        ])?;
    }
    finish(header, wtr)
}

/// Per-replication estimates in long format.
pub fn replications_csv(results: &[ReplicationResult], names: &[String], header: &str) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["replication", "estimator", "parameter", "estimate", "se", "ci_lo", "ci_hi"])?;
    for r in results {
        for (estimator, ests) in [("gibbs", &r.gibbs), ("cdml", &r.cdml)] {
            for (name, e) in names.iter().zip(ests.iter()) {
                wtr.write_record([
                    r.replication.to_string(),
                    estimator.to_string(),
                    name.clone(),
                    e.estimate.to_string(),
                    opt(e.se),
                    opt(e.ci_lo),
                    opt(e.ci_hi),
                ])?;
            }
        }
    }
    finish(header, wtr)
}

/// Per-replication convergence and missingness figures.
pub fn replication_diagnostics_csv(results: &[ReplicationResult], header: &str) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "replication",
        "psrf_checked",
        "psrf_over",
        "psrf_max",
        "missing_y",
        "missing_c1",
        "missing_d",
        "cdml_converged",
    ])?;
    for r in results {
        wtr.write_record([
            r.replication.to_string(),
            r.psrf_checked.to_string(),
            r.psrf_over.to_string(),
            r.psrf_max.to_string(),
            r.missing_rates[0].to_string(),
            r.missing_rates[1].to_string(),
            r.missing_rates[2].to_string(),
            r.cdml_converged.to_string(),
        ])?;
    }
    finish(header, wtr)
}
