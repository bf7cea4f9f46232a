//! Dataset CSV files: header `w1,…,wd,y,flag`, one row per observation.
//! Numbers are written with 17 significant digits, so a written file reads
//! back to the same bits.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rhoreg::{Dataset, RowFlag};

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=ds.dim()).map(|j| format!("w{j}")).collect();
    header.push("y".into());
    header.push("flag".into());
    wtr.write_record(&header)?;
    for (w, y, flag) in ds.rows() {
        let mut rec: Vec<String> = w.iter().map(|v| format_f64(*v)).collect();
        rec.push(format_f64(y));
        rec.push(flag.as_str().into());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a dataset. The `flag` column is optional and defaults to `clean`.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let y_col = cols
        .iter()
        .position(|c| *c == "y")
        .context("missing column 'y'")?;
    let flag_col = cols.iter().position(|c| *c == "flag");
    let d = y_col;
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("w{}", j + 1) {
            bail!("expected column w{} before 'y', found {c:?}", j + 1);
        }
    }
    if let Some(extra) = cols
        .iter()
        .enumerate()
        .find(|(k, _)| *k > y_col && Some(*k) != flag_col)
    {
        bail!("unexpected column {:?}", extra.1);
    }
    let mut ds = Dataset::new(d);
    let mut w = vec![0.0; d];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let num = |k: usize| -> Result<f64> {
            let s = rec.get(k).with_context(|| format!("row {row}: missing field {k}"))?;
            s.parse::<f64>()
                .with_context(|| format!("row {row}: {s:?} is not a number"))
        };
        for (j, v) in w.iter_mut().enumerate() {
            *v = num(j)?;
        }
        let y = num(y_col)?;
        let flag = match flag_col {
            Some(k) => RowFlag::parse(rec.get(k).unwrap_or("clean"))
                .with_context(|| format!("row {row}"))?,
            None => RowFlag::Clean,
        };
        ds.push(&w, y, flag).with_context(|| format!("row {row}"))?;
    }
    Ok(ds)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(f).with_context(|| format!("reading {}", path.display()))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_dataset(ds, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut ds = Dataset::new(2);
        ds.push(&[0.1, 1.0 / 3.0], 7.0, RowFlag::Clean).unwrap();
        ds.push(&[-2.5e-300, 1e300], std::f64::consts::PI, RowFlag::Contaminated)
            .unwrap();
        ds.push(&[0.0, -0.0], 1000.0, RowFlag::Outlier).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("w1,w2,y,flag\n"));
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn flag_column_is_optional() {
        let ds = read_dataset("w1,y\n0.5,1\n0.25,0\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.flag(1), RowFlag::Clean);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_dataset("w1,w3,y\n1,2,3\n".as_bytes()).is_err());
        assert!(read_dataset("w1,x\n1,2\n".as_bytes()).is_err());
        assert!(read_dataset("w1,y\n1,abc\n".as_bytes()).is_err());
        assert!(read_dataset("w1,y,flag\n1,2,dirty\n".as_bytes()).is_err());
    }
}
