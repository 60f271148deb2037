use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{BoundingBox, ConfidenceGrid, GridEntry};
use crate::error::{Error, Result};
use crate::flowmap::FlowMap;
use crate::sim::{FrameGeometry, FrameObservation, Regime};

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::format(path, e.to_string()),
    }
}

fn open(path: &Path, headers: bool) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

/// Plain comma-separated matrix, one row per line, no header.
pub fn read_matrix_csv(path: &Path) -> Result<FlowMap> {
    let mut reader = open(path, false)?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::format(path, format!("row {}: `{field}` is not a number", line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    FlowMap::from_rows(rows).map_err(|e| Error::format(path, e.to_string()))
}

/// Flow magnitudes from a `.flo` file or, for any other extension, a CSV matrix.
pub fn read_flow_map(path: &Path) -> Result<FlowMap> {
    let is_flo = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("flo"));
    if is_flo {
        super::read_flo(path)?.magnitude()
    } else {
        read_matrix_csv(path)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    i: usize,
    j: usize,
    k: usize,
    confidence: f64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

/// Reads `i,j,k,confidence,cx,cy,w,h` rows; cells not listed keep zero confidence.
pub fn read_grid_csv(
    path: &Path,
    rows: usize,
    cols: usize,
    boxes: usize,
) -> Result<ConfidenceGrid> {
    let mut grid = ConfidenceGrid::empty(rows, cols, boxes)?;
    let mut seen = HashSet::new();
    let mut reader = open(path, true)?;
    for (line, row) in reader.deserialize::<GridRow>().enumerate() {
        let r = row.map_err(|e| csv_error(path, e))?;
        let at = line + 2;
        if r.i >= rows || r.j >= cols || r.k >= boxes {
            return Err(Error::format(
                path,
                format!(
                    "line {at}: index ({}, {}, {}) outside {rows}x{cols}x{boxes}",
                    r.i, r.j, r.k
                ),
            ));
        }
        if !seen.insert((r.i, r.j, r.k)) {
            return Err(Error::format(
                path,
                format!("line {at}: duplicate entry ({}, {}, {})", r.i, r.j, r.k),
            ));
        }
        let entry = GridEntry {
            confidence: r.confidence,
            bbox: BoundingBox::new(r.cx, r.cy, r.w, r.h),
        };
        grid.set(r.i, r.j, r.k, entry)
            .map_err(|e| Error::format(path, format!("line {at}: {e}")))?;
    }
    Ok(grid)
}

/// Writes every grid entry in `(i, j, k)` order.
pub fn write_grid_csv(path: &Path, grid: &ConfidenceGrid) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            for k in 0..grid.boxes() {
                let e = grid.get(i, j, k);
                let row = GridRow {
                    i,
                    j,
                    k,
                    confidence: e.confidence,
                    cx: e.bbox.cx,
                    cy: e.bbox.cy,
                    w: e.bbox.w,
                    h: e.bbox.h,
                };
                writer.serialize(row).map_err(|e| csv_error(path, e))?;
            }
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))?;
    super::write_atomic(path, &bytes)
}

/// One line of a replay trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub regime: String,
    /// Informational object count reported by the producer.
    pub num_objects: usize,
    pub flow_file: PathBuf,
    pub conf_file: PathBuf,
}

/// Loads a `t,regime,num_objects,flow_file,conf_file` trace. Relative file
/// names resolve against the trace's directory. Replayed frames carry no
/// ground truth.
pub fn read_trace(path: &Path, geometry: &FrameGeometry) -> Result<Vec<FrameObservation>> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = open(path, true)?;
    let mut frames = Vec::new();
    let mut last_t = None;
    for (line, row) in reader.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let at = line + 2;
        if last_t.is_some_and(|prev| row.t <= prev) {
            return Err(Error::format(path, format!("line {at}: t must increase")));
        }
        last_t = Some(row.t);
        let regime = Regime::parse(&row.regime).ok_or_else(|| {
            Error::format(path, format!("line {at}: unknown regime `{}`", row.regime))
        })?;
        let flow = read_flow_map(&base.join(&row.flow_file))?;
        let grid = read_grid_csv(
            &base.join(&row.conf_file),
            geometry.grid_rows,
            geometry.grid_cols,
            geometry.boxes,
        )?;
        frames.push(FrameObservation {
            t: row.t,
            regime,
            objects: Vec::new(),
            flow,
            grid,
        });
    }
    if frames.is_empty() {
        return Err(Error::format(path, "trace has no frames"));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn matrix_csv_parses_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1, 3\n5,7\n").unwrap();
        let m = read_matrix_csv(&p).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.values(), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn matrix_csv_rejects_ragged_and_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        fs::write(&p, "1,x\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        fs::write(&p, "").unwrap();
        assert!(read_matrix_csv(&p).is_err());
        assert!(matches!(
            read_matrix_csv(&dir.path().join("none.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let mut g = ConfidenceGrid::empty(2, 3, 2).unwrap();
        g.set(
            1,
            2,
            1,
            GridEntry {
                confidence: 0.7,
                bbox: BoundingBox::new(0.8, 0.7, 0.1, 0.2),
            },
        )
        .unwrap();
        write_grid_csv(&p, &g).unwrap();
        assert_eq!(read_grid_csv(&p, 2, 3, 2).unwrap(), g);
    }

    #[test]
    fn grid_rejects_out_of_range_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let head = "i,j,k,confidence,cx,cy,w,h\n";
        fs::write(&p, format!("{head}2,0,0,0.5,0.5,0.5,0.1,0.1\n")).unwrap();
        assert!(read_grid_csv(&p, 2, 2, 1).is_err());
        fs::write(
            &p,
            format!("{head}0,0,0,0.5,0.5,0.5,0.1,0.1\n0,0,0,0.4,0.5,0.5,0.1,0.1\n"),
        )
        .unwrap();
        assert!(read_grid_csv(&p, 2, 2, 1).is_err());
        fs::write(&p, format!("{head}0,0,0,1.5,0.5,0.5,0.1,0.1\n")).unwrap();
        assert!(read_grid_csv(&p, 2, 2, 1).is_err());
    }

    #[test]
    fn trace_loads_frames() {
        let dir = tempfile::tempdir().unwrap();
        let geometry = FrameGeometry {
            flow_rows: 2,
            flow_cols: 2,
            grid_rows: 2,
            grid_cols: 2,
            boxes: 1,
        };
        fs::write(dir.path().join("f0.csv"), "0,1\n2,3\n").unwrap();
        let field = crate::io::FlowField::new(2, 2, vec![3.0; 4], vec![4.0; 4]).unwrap();
        crate::io::write_flo(&dir.path().join("f1.flo"), &field).unwrap();
        fs::write(
            dir.path().join("c.csv"),
            "i,j,k,confidence,cx,cy,w,h\n0,1,0,0.9,0.75,0.25,0.2,0.2\n",
        )
        .unwrap();
        let trace = dir.path().join("trace.csv");
        fs::write(
            &trace,
            "t,regime,num_objects,flow_file,conf_file\n0,driving,1,f0.csv,c.csv\n1,stationary,1,f1.flo,c.csv\n",
        )
        .unwrap();
        let frames = read_trace(&trace, &geometry).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].regime, Regime::Stationary);
        assert_eq!(frames[1].flow.values(), &[5.0; 4]);
        assert_eq!(frames[0].grid.get(0, 1, 0).confidence, 0.9);
        assert!(frames[0].objects.is_empty());

        fs::write(
            &trace,
            "t,regime,num_objects,flow_file,conf_file\n0,flying,1,f0.csv,c.csv\n",
        )
        .unwrap();
        assert!(read_trace(&trace, &geometry).is_err());
    }
}
