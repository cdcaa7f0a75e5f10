//! Dataset CSV and sidecar I/O.
//!
//! Columns: `t, rcp_xapp, rcp_icp, p_0..p_{P-1}, k_0..k_{K-1},
//! sla_0..sla_{K-1}, vk, p_k, x_k, x_p, label`. Index lists are
//! semicolon-separated; `p_k` and `x_k` carry one list per violated KPI,
//! joined by `|` in the order of `vk`. Empty optional fields are empty
//! strings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::domain::{ConflictLabel, IcpId, KpiId, MappingTables, Sidecar, XAppId};
use crate::error::{Error, Result};
use crate::genc::{Rcp, SnapshotRecord};

pub fn header(p: usize, k: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "rcp_xapp".into(), "rcp_icp".into()];
    h.extend((0..p).map(|i| format!("p_{i}")));
    h.extend((0..k).map(|j| format!("k_{j}")));
    h.extend((0..k).map(|j| format!("sla_{j}")));
    h.extend(["vk", "p_k", "x_k", "x_p", "label"].map(String::from));
    h
}

fn join<T>(items: &[T], f: impl Fn(&T) -> u32) -> String {
    items
        .iter()
        .map(|x| f(x).to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub struct DatasetWriter<W: Write> {
    inner: csv::Writer<W>,
    p: usize,
    k: usize,
    row: Vec<String>,
}

impl DatasetWriter<BufWriter<File>> {
    pub fn create(path: &Path, p: usize, k: usize) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), p, k)
    }
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(w: W, p: usize, k: usize) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().from_writer(w);
        inner.write_record(header(p, k))?;
        Ok(DatasetWriter {
            inner,
            p,
            k,
            row: Vec::with_capacity(3 + p + 2 * k + 5),
        })
    }

    pub fn write(&mut self, r: &SnapshotRecord, mappings: &MappingTables) -> Result<()> {
        if r.icp_values.len() != self.p || r.kpi_values.len() != self.k || r.sla.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "record at t={} does not match P={} K={}",
                r.t, self.p, self.k
            )));
        }
        self.row.clear();
        self.row.push(r.t.to_string());
        match r.rcp {
            Some(rcp) => {
                self.row.push(rcp.xapp.0.to_string());
                self.row.push(rcp.icp.0.to_string());
            }
            None => {
                self.row.push(String::new());
                self.row.push(String::new());
            }
        }
        self.row.extend(r.icp_values.iter().map(|v| v.to_string()));
        self.row.extend(r.kpi_values.iter().map(|v| v.to_string()));
        self.row.extend(r.sla.iter().map(|v| v.to_string()));
        self.row.push(join(&r.vk, |k| k.0));
        let per_kpi = |f: &dyn Fn(KpiId) -> String| -> String {
            r.vk.iter().map(|k| f(*k)).collect::<Vec<_>>().join("|")
        };
        self.row.push(per_kpi(&|k| {
            mappings.group(k).map(|g| join(g, |p| p.0)).unwrap_or_default()
        }));
        self.row.push(per_kpi(&|k| {
            mappings.managers(k).map(|x| join(x, |x| x.0)).unwrap_or_default()
        }));
        self.row.push(match r.rcp {
            Some(rcp) => mappings
                .owners(rcp.icp)
                .map(|o| join(o, |x| x.0))
                .unwrap_or_default(),
            None => String::new(),
        });
        self.row.push(r.label.as_str().to_string());
        self.inner.write_record(&self.row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn parse_list<T>(s: &str, f: impl Fn(u32) -> T) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|x| {
            x.trim()
                .parse::<u32>()
                .map(&f)
                .map_err(|_| Error::Parse(format!("bad index {x:?}")))
        })
        .collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

/// Reads a dataset CSV, inferring P and K from the header.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<SnapshotRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let p = headers.iter().filter(|h| h.starts_with("p_") && *h != "p_k").count();
    let k = headers.iter().filter(|h| h.starts_with("sla_")).count();
    let expected = header(p, k);
    if headers.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        let missing: Vec<String> = expected
            .iter()
            .filter(|h| !headers.iter().any(|x| x == h.as_str()))
            .cloned()
            .collect();
        return Err(Error::MissingColumns(missing));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = || -> Result<SnapshotRecord> {
            let field = |i: usize| rec.get(i).unwrap_or("");
            let t = field(0)
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("bad t {:?}", field(0))))?;
            let rcp = match (field(1).trim(), field(2).trim()) {
                ("", "") => None,
                (x, p) if !x.is_empty() && !p.is_empty() => Some(Rcp {
                    xapp: XAppId(x.parse().map_err(|_| Error::Parse(format!("bad xApp {x:?}")))?),
                    icp: IcpId(p.parse().map_err(|_| Error::Parse(format!("bad ICP {p:?}")))?),
                }),
                _ => return Err(Error::Parse("rcp_xapp and rcp_icp must be both set or both empty".into())),
            };
            let mut col = 3;
            let mut take = |n: usize| -> Result<Vec<f64>> {
                let v = (col..col + n).map(|i| parse_f64(field(i))).collect();
                col += n;
                v
            };
            let icp_values = take(p)?;
            let kpi_values = take(k)?;
            let sla = take(k)?;
            let vk = parse_list(field(3 + p + 2 * k), KpiId)?;
            let label = ConflictLabel::parse(field(3 + p + 2 * k + 4))?;
            Ok(SnapshotRecord {
                t,
                rcp,
                icp_values,
                kpi_values,
                sla,
                vk,
                label,
            })
        };
        out.push(parse().map_err(|e| e.at_row(row))?);
    }
    Ok(out)
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<SnapshotRecord>> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn write_dataset_file(
    path: &Path,
    records: &[SnapshotRecord],
    mappings: &MappingTables,
) -> Result<()> {
    let mut w = DatasetWriter::create(path, mappings.icp_count(), mappings.kpi_count())?;
    for r in records {
        w.write(r, mappings)?;
    }
    w.finish()?.flush()?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    Sidecar::from_json(&std::fs::read_to_string(path)?)
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    std::fs::write(path, sidecar.to_json()?)?;
    Ok(())
}

/// Sidecar path convention: `data.csv` -> `data.meta.json`.
pub fn sidecar_path(dataset: &Path) -> std::path::PathBuf {
    dataset.with_extension("meta.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genc::{simulate_to_vec, synthesize_entities, IntensityProfile, SimConfig};

    #[test]
    fn header_layout() {
        let h = header(2, 1);
        assert_eq!(
            h,
            vec!["t", "rcp_xapp", "rcp_icp", "p_0", "p_1", "k_0", "sla_0", "vk", "p_k", "x_k", "x_p", "label"]
        );
    }

    #[test]
    fn csv_roundtrip_preserves_records() {
        let model = synthesize_entities(3, 0.3, 4).unwrap();
        let recs = simulate_to_vec(&model, &IntensityProfile::high(), &SimConfig::new(2_000, 50.0, 2)).unwrap();
        let mut w = DatasetWriter::new(Vec::new(), model.p_count, model.k_count).unwrap();
        for r in &recs {
            w.write(r, &model.mappings).unwrap();
        }
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("1,,,"));
        let back = read_dataset(bytes.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn missing_columns_are_named() {
        let err = read_dataset("t,rcp_xapp\n1,\n".as_bytes()).unwrap_err();
        match err {
            Error::MissingColumns(cols) => assert!(cols.contains(&"label".to_string())),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn sidecar_path_convention() {
        assert_eq!(sidecar_path(Path::new("out/d.csv")), Path::new("out/d.meta.json"));
    }
}
