use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const REQUIRED_COLUMNS: [&str; 7] = ["radio", "mcc", "net", "cell", "lon", "lat", "range"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
    /// Meters east of the window center.
    pub x: f64,
    /// Meters north of the window center.
    pub y: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFilter {
    pub mcc: u32,
    pub net: u32,
    pub radio: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center_lat: f64,
    pub center_lon: f64,
    pub width_m: f64,
    pub height_m: f64,
}

impl Window {
    /// Equirectangular projection about the window center.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = EARTH_RADIUS_M * (lon - self.center_lon).to_radians() * self.center_lat.to_radians().cos();
        let y = EARTH_RADIUS_M * (lat - self.center_lat).to_radians();
        (x, y)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.width_m / 2.0 && y.abs() <= self.height_m / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub filter: CellFilter,
    pub bbox: BBox,
    pub window: Window,
}

impl TopologyConfig {
    /// LTE cells of MCC 272 / MNC 1 in central Dublin, cropped to 400 m x 500 m.
    pub fn dublin() -> Self {
        TopologyConfig {
            filter: CellFilter {
                mcc: 272,
                net: 1,
                radio: "LTE".into(),
            },
            bbox: BBox {
                lat_min: 53.320,
                lat_max: 53.356,
                lon_min: -6.305,
                lon_max: -6.187,
            },
            window: Window {
                center_lat: 53.343,
                center_lon: -6.262,
                width_m: 400.0,
                height_m: 500.0,
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingest {
    pub cells: Vec<Cell>,
    /// Rows that could not be parsed.
    pub skipped: usize,
}

pub fn ingest_opencellid(path: impl AsRef<Path>, config: &TopologyConfig) -> Result<Ingest> {
    ingest_opencellid_reader(std::fs::File::open(path)?, config)
}

pub fn ingest_opencellid_reader(reader: impl Read, config: &TopologyConfig) -> Result<Ingest> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        log::warn!("OpenCellID input is empty");
        return Ok(Ingest::default());
    }
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|c| col(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let idx: Vec<usize> = REQUIRED_COLUMNS.iter().map(|c| col(c).unwrap()).collect();

    let mut out = Ingest::default();
    for row in rdr.records() {
        let Ok(row) = row else {
            out.skipped += 1;
            continue;
        };
        let field = |i: usize| row.get(idx[i]).map(str::trim).unwrap_or("");
        let parsed = (|| -> Option<(u32, u32, u64, f64, f64, f64)> {
            Some((
                field(1).parse().ok()?,
                field(2).parse().ok()?,
                field(3).parse().ok()?,
                field(4).parse().ok()?,
                field(5).parse().ok()?,
                field(6).parse().ok()?,
            ))
        })();
        let Some((mcc, net, id, lon, lat, range)) = parsed else {
            out.skipped += 1;
            continue;
        };
        if !field(0).eq_ignore_ascii_case(&config.filter.radio)
            || mcc != config.filter.mcc
            || net != config.filter.net
            || !config.bbox.contains(lat, lon)
        {
            continue;
        }
        let (x, y) = config.window.project(lat, lon);
        if config.window.contains(x, y) {
            out.cells.push(Cell {
                id,
                lat,
                lon,
                x,
                y,
                radius: range,
            });
        }
    }
    if out.skipped > 0 {
        log::warn!("skipped {} malformed OpenCellID rows", out.skipped);
    }
    out.cells.sort_by_key(|c| c.id);
    Ok(out)
}

/// Writes `id,x,y,radius` rows.
pub fn write_positions(cells: &[Cell], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "x", "y", "radius"])?;
    for c in cells {
        out.write_record([c.id.to_string(), c.x.to_string(), c.y.to_string(), c.radius.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "radio,mcc,net,area,cell,unit,lon,lat,range,samples,changeable,created,updated,averageSignal\n";

    fn ingest(body: &str) -> Result<Ingest> {
        ingest_opencellid_reader(format!("{HEADER}{body}").as_bytes(), &TopologyConfig::dublin())
    }

    #[test]
    fn center_projects_to_origin() {
        let w = TopologyConfig::dublin().window;
        assert_eq!(w.project(53.343, -6.262), (0.0, 0.0));
        let (x, _) = w.project(53.343, -6.262 + 0.003);
        assert!((x - 199.2).abs() < 0.5, "{x}");
    }

    #[test]
    fn filters_radio_and_operator() {
        let body = "LTE,272,1,1,7,,-6.262,53.343,800,1,1,0,0,0\n\
                    GSM,272,1,1,8,,-6.262,53.343,800,1,1,0,0,0\n\
                    LTE,272,2,1,9,,-6.262,53.343,800,1,1,0,0,0\n";
        let out = ingest(body).unwrap();
        assert_eq!(out.cells.len(), 1);
        assert_eq!(out.cells[0].id, 7);
        assert_eq!(out.cells[0].radius, 800.0);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let out = ingest("LTE,272,1,1,x,,-6.262,53.343,800,1,1,0,0,0\nLTE,272\n").unwrap();
        assert!(out.cells.is_empty());
        assert_eq!(out.skipped, 2);
    }

    #[test]
    fn missing_columns_are_named() {
        let err = ingest_opencellid_reader("radio,mcc,cell\nLTE,272,1\n".as_bytes(), &TopologyConfig::dublin());
        match err.unwrap_err() {
            Error::MissingColumns(c) => assert_eq!(c, vec!["net", "lon", "lat", "range"]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_file_is_empty() {
        let out = ingest_opencellid_reader("".as_bytes(), &TopologyConfig::dublin()).unwrap();
        assert_eq!(out, Ingest::default());
    }

    #[test]
    fn position_export_header() {
        let mut buf = Vec::new();
        write_positions(
            &[Cell {
                id: 3,
                lat: 0.0,
                lon: 0.0,
                x: 1.5,
                y: -2.0,
                radius: 100.0,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,x,y,radius\n3,1.5,-2,100\n");
    }
}
