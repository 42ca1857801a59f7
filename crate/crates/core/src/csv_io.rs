//! CSV ingestion of yield data and CSV export of panels and kernels.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::curve_panel::{GridSpec, YieldPanel};
use crate::error::{Error, Result};
use crate::kernel_space::StepKernel;

const YIELD_HEADER: [&str; 3] = ["date", "maturity_years", "yield"];

/// Reads a long-format `date,maturity_years,yield` table into a dense panel.
///
/// Maturities are snapped to the nearest multiple of `1/steps_per_year`
/// (tolerance half a step); cells beyond `max_maturity` are ignored. Every
/// date must cover all maturities `1..=M/Δn`; maturity 0 is optional.
pub fn read_yields<R: Read>(reader: R, steps_per_year: usize, max_maturity: f64) -> Result<YieldPanel> {
    let probe = GridSpec::per_year(steps_per_year, max_maturity, 0.0)?;
    let dn = probe.delta_n;
    let m = probe.m_cells();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_ascii_lowercase).collect();
    if header != YIELD_HEADER {
        return Err(Error::data(format!(
            "line 1: expected header date,maturity_years,yield, found {}",
            header.join(",")
        )));
    }
    let mut cells: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    let mut skipped = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::data(format!("line {line}: expected 3 fields, found {}", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::data(format!("line {line}: bad date {:?}: {e}", &record[0])))?;
        let x: f64 = record[1]
            .parse()
            .map_err(|_| Error::data(format!("line {line}: bad maturity {:?}", &record[1])))?;
        let y: f64 = record[2]
            .parse()
            .map_err(|_| Error::data(format!("line {line}: bad yield {:?}", &record[2])))?;
        if !x.is_finite() || x < 0.0 || !y.is_finite() {
            return Err(Error::data(format!("line {line}: non-finite or negative entry")));
        }
        let k = (x / dn).round();
        if (x - k * dn).abs() > 0.5 * dn {
            return Err(Error::data(format!("line {line}: maturity {x} does not snap to the grid")));
        }
        let j = k as usize;
        if j > m {
            skipped += 1;
            continue;
        }
        let row = cells.entry(date).or_insert_with(|| vec![None; m + 1]);
        if row[j].replace(y).is_some() {
            return Err(Error::data(format!(
                "line {line}: duplicate cell for {date} at maturity index {j}"
            )));
        }
    }
    if skipped > 0 {
        log::debug!("ignored {skipped} cells beyond maturity {max_maturity}");
    }
    if cells.is_empty() {
        return Err(Error::data("yield file has no data rows"));
    }
    let dates: Vec<NaiveDate> = cells.keys().copied().collect();
    let mut values = DMatrix::zeros(dates.len(), m + 1);
    for (i, (date, row)) in cells.iter().enumerate() {
        for j in 1..=m {
            values[(i, j)] = row[j].ok_or_else(|| {
                Error::data(format!("{date}: missing yield at maturity {}", j as f64 * dn))
            })?;
        }
        values[(i, 0)] = row[0].unwrap_or(values[(i, 1)]);
    }
    let grid = GridSpec::per_year(steps_per_year, max_maturity, (dates.len() - 1) as f64 * dn)?;
    YieldPanel::new(grid, values)?.with_dates(dates)
}

pub fn read_yields_file(path: &Path, steps_per_year: usize, max_maturity: f64) -> Result<YieldPanel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_yields(file, steps_per_year, max_maturity)
}

/// Wide panel: first column `first_header` with `labels`, then one column per maturity.
pub fn write_panel<W: Write>(
    w: W,
    first_header: &str,
    labels: &[String],
    maturities: &[f64],
    values: &DMatrix<f64>,
) -> Result<()> {
    if labels.len() != values.nrows() || maturities.len() != values.ncols() {
        return Err(Error::DimensionMismatch {
            expected: values.nrows() * values.ncols(),
            actual: labels.len() * maturities.len(),
        });
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![first_header.to_string()];
    header.extend(maturities.iter().map(|x| x.to_string()));
    wtr.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Cell midpoints of a kernel's maturity grid.
pub fn cell_midpoints(k: &StepKernel) -> Vec<f64> {
    (0..k.m_cells()).map(|j| (j as f64 + 0.5) * k.delta_n()).collect()
}

/// Kernel matrix with the cell midpoints as the first row and first column.
pub fn write_kernel<W: Write>(w: W, k: &StepKernel) -> Result<()> {
    let mid = cell_midpoints(k);
    let labels: Vec<String> = mid.iter().map(|x| x.to_string()).collect();
    write_panel(w, "maturity", &labels, &mid, k.values())
}

/// `x,y,value` triplets over all cell midpoints.
pub fn write_kernel_triplets<W: Write>(w: W, k: &StepKernel) -> Result<()> {
    let mid = cell_midpoints(k);
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "y", "value"])?;
    for (a, x) in mid.iter().enumerate() {
        for (b, y) in mid.iter().enumerate() {
            wtr.write_record([x.to_string(), y.to_string(), k.values()[(a, b)].to_string()])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long_csv(dates: &[&str], m: usize, step: f64) -> String {
        let mut s = String::from("date,maturity_years,yield\n");
        for (i, d) in dates.iter().enumerate() {
            for j in 1..=m {
                s.push_str(&format!("{d},{},{}\n", j as f64 * step, 0.01 * (i + j) as f64));
            }
        }
        s
    }

    #[test]
    fn reads_a_complete_panel() {
        let csv = long_csv(&["2020-01-03", "2020-01-02", "2020-01-06"], 4, 0.25);
        let y = read_yields(csv.as_bytes(), 4, 1.0).unwrap();
        assert_eq!(y.values.shape(), (3, 5));
        assert_eq!(y.dates.as_ref().unwrap()[0].to_string(), "2020-01-02");
        assert_eq!(y.values[(0, 2)], 0.03);
        assert_eq!(y.values[(0, 0)], y.values[(0, 1)]);
        assert_eq!(y.grid.n_steps, 2);
    }

    #[test]
    fn snaps_nearby_maturities() {
        let csv = "date,maturity_years,yield\n2020-01-02,0.26,0.01\n2020-01-02,0.49,0.02\n2020-01-03,0.25,0.01\n2020-01-03,0.5,0.02\n";
        let y = read_yields(csv.as_bytes(), 4, 0.5).unwrap();
        assert_eq!(y.values[(0, 2)], 0.02);
    }

    #[test]
    fn rejects_duplicates_with_line_number() {
        let csv = "date,maturity_years,yield\n2020-01-02,0.25,0.01\n2020-01-02,0.26,0.01\n";
        let err = read_yields(csv.as_bytes(), 4, 0.25).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_bad_rows_and_missing_cells() {
        let bad = "date,maturity_years,yield\n2020-13-02,0.25,0.01\n";
        assert!(read_yields(bad.as_bytes(), 4, 0.25).unwrap_err().to_string().contains("line 2"));
        let header = "day,maturity,yield\n";
        assert!(read_yields(header.as_bytes(), 4, 0.25).is_err());
        let missing = "date,maturity_years,yield\n2020-01-02,0.25,0.01\n";
        assert!(matches!(read_yields(missing.as_bytes(), 4, 0.5), Err(Error::Data(_))));
    }

    #[test]
    fn kernel_export_layout() {
        let k = StepKernel::new(0.5, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0])).unwrap();
        let mut buf = Vec::new();
        write_kernel(&mut buf, &k).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "maturity,0.25,0.75\n0.25,1,2\n0.75,2,3\n");
        let mut buf = Vec::new();
        write_kernel_triplets(&mut buf, &k).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
