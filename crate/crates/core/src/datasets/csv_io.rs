use std::io::Write;
use std::path::Path;

use super::LabeledDataset;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

/// Writes features (`x0, x1, ...`) followed by any metadata columns, with
/// 17 significant digits per value.
pub fn save_csv(d: &LabeledDataset<f64>, path: &Path, header: bool) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_csv(d, &mut w, header)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(d: &LabeledDataset<f64>, w: &mut W, header: bool) -> Result<()> {
    if header {
        let mut names: Vec<String> = (0..d.x.cols()).map(|j| format!("x{j}")).collect();
        names.extend(d.meta_names.iter().cloned());
        writeln!(w, "{}", names.join(","))?;
    }
    let mut line = String::new();
    for i in 0..d.x.rows() {
        line.clear();
        let meta = d.meta.as_ref().map(|m| m.row(i)).unwrap_or(&[]);
        for (k, v) in d.x.row(i).iter().chain(meta).enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format_value(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a rectangular numeric table. The last `meta_columns` columns become
/// metadata; names come from the header when present.
pub fn load_csv(path: &Path, has_header: bool, meta_columns: usize) -> Result<LabeledDataset<f64>> {
    let f = std::fs::File::open(path)?;
    read_csv(f, has_header, meta_columns)
}

pub fn read_csv<R: std::io::Read>(r: R, has_header: bool, meta_columns: usize) -> Result<LabeledDataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Option<Vec<String>> = if has_header {
        let h = rdr.headers().map_err(|e| csv_err(&e, 1))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(&e, 0))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column {}: '{cell}' is not a number", c + 1),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "no data rows".into(),
    })?;
    if let Some(h) = &header {
        if h.len() != width {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header has {} fields, rows have {width}", h.len()),
            });
        }
    }
    if meta_columns >= width {
        return Err(Error::invalid(format!(
            "{meta_columns} metadata columns leave no features in a {width}-column table"
        )));
    }
    let all = Matrix::from_vec(rows, width, values)?;
    let nx = width - meta_columns;
    let x = all.slice_cols(0, nx);
    if meta_columns == 0 {
        return Ok(LabeledDataset::new(x));
    }
    let names = match header {
        Some(h) => h[nx..].to_vec(),
        None => (0..meta_columns).map(|k| format!("meta{k}")).collect(),
    };
    LabeledDataset::with_meta(x, all.slice_cols(nx, width), names)
}

fn csv_err(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}
