//! File output: CSV/JSON emitters with atomic write-temp-then-rename
//! semantics. All floats are serialized with 17 significant digits
//! (`{:.16e}`) so files round-trip doubles losslessly and identical runs
//! produce bitwise-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use wyflow_core::background::Background;
use wyflow_core::flow::{FlowTrace, TraceRow};
use wyflow_core::oracle::RefinementReport;
use wyflow_core::spectral::Spectrum;
use wyflow_core::Field;

use crate::error::{CliError, Result};

/// Writes `content` to `path` atomically: a sibling temp file is written,
/// flushed, and renamed over the target, so readers never observe a
/// partially written artifact.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = PathBuf::from(path);
    let mut name = path
        .file_name()
        .ok_or_else(|| CliError::config(format!("not a file path: {}", path.display())))?
        .to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    fs::write(&tmp, content).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut s = TraceRow::COLUMNS.join(",");
    s.push('\n');
    for row in &trace.rows {
        let vals: Vec<String> = row.values().iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    s
}

pub fn trace_json(trace: &FlowTrace) -> String {
    let rows: Vec<Vec<f64>> = trace.rows.iter().map(|r| r.values().to_vec()).collect();
    let doc = serde_json::json!({
        "columns": TraceRow::COLUMNS,
        "rows": rows,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("trace serialization");
    s.push('\n');
    s
}

/// Nodal field with coordinates: `x,value` (1-d) or `x,y,value` (2-d).
pub fn field_csv(bg: &Background, name: &str, values: &Field) -> String {
    let mut s = String::new();
    if bg.grid.is_1d() {
        s.push_str(&format!("x,{name}\n"));
        for (i, &v) in values.iter().enumerate() {
            s.push_str(&format!("{},{}\n", fmt_f64(bg.grid.coord(i)[0]), fmt_f64(v)));
        }
    } else {
        s.push_str(&format!("x,y,{name}\n"));
        for (i, &v) in values.iter().enumerate() {
            let [x, y] = bg.grid.coord(i);
            s.push_str(&format!("{},{},{}\n", fmt_f64(x), fmt_f64(y), fmt_f64(v)));
        }
    }
    s
}

pub fn field_json(bg: &Background, name: &str, values: &Field) -> String {
    let coords: Vec<[f64; 2]> = (0..values.len()).map(|i| bg.grid.coord(i)).collect();
    let doc = serde_json::json!({
        "name": name,
        "coordinates": coords,
        "values": values,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("field serialization");
    s.push('\n');
    s
}

/// Eigenvalue table: `mode,lambda`.
pub fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut s = String::from("mode,lambda\n");
    for (a, pair) in spectrum.pairs.iter().enumerate() {
        s.push_str(&format!("{a},{}\n", fmt_f64(pair.lambda)));
    }
    s
}

/// Eigenfunction table: one row per node, one `psi_a` column per mode.
pub fn modes_csv(bg: &Background, spectrum: &Spectrum) -> String {
    let k = spectrum.pairs.len();
    let mut header: Vec<String> =
        if bg.grid.is_1d() { vec!["x".into()] } else { vec!["x".into(), "y".into()] };
    header.extend((0..k).map(|a| format!("psi_{a}")));
    let mut s = header.join(",");
    s.push('\n');
    for i in 0..bg.node_count() {
        let [x, y] = bg.grid.coord(i);
        let mut row: Vec<String> =
            if bg.grid.is_1d() { vec![fmt_f64(x)] } else { vec![fmt_f64(x), fmt_f64(y)] };
        row.extend(spectrum.pairs.iter().map(|p| fmt_f64(p.psi[i])));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn spectrum_json(bg: &Background, spectrum: &Spectrum) -> String {
    let coords: Vec<[f64; 2]> = (0..bg.node_count()).map(|i| bg.grid.coord(i)).collect();
    let lambdas: Vec<f64> = spectrum.pairs.iter().map(|p| p.lambda).collect();
    let psis: Vec<&Field> = spectrum.pairs.iter().map(|p| &p.psi).collect();
    let doc = serde_json::json!({
        "lambda": lambdas,
        "coordinates": coords,
        "psi": psis,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("spectrum serialization");
    s.push('\n');
    s
}

/// Refinement study: `h,error,order` (the fitted order repeated per row —
/// flat rows keep the file self-contained).
pub fn refinement_csv(report: &RefinementReport) -> String {
    let mut s = String::from("h,error,order\n");
    for (sz, err) in report.sizes.iter().zip(report.errors.iter()) {
        let h = 1.0 / (*sz as f64 - 1.0);
        s.push_str(&format!("{},{},{}\n", fmt_f64(h), fmt_f64(*err), fmt_f64(report.order)));
    }
    s
}

/// Reads initial data from a CSV file: the last comma-separated column,
/// one node per line, optional header row.
pub fn read_field_csv(path: &Path, expected: usize) -> Result<Field> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let last = t.rsplit(',').next().unwrap_or(t).trim();
        match last.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if idx == 0 => continue, // header row
            Err(_) => {
                return Err(CliError::config(format!(
                    "{}: line {} is not numeric: '{t}'",
                    path.display(),
                    idx + 1
                )));
            }
        }
    }
    if out.len() != expected {
        return Err(CliError::config(format!(
            "{}: expected {expected} nodal values, found {}",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wyflow_core::background::{build_background, BackgroundSpec, Family, Phi0Spec};

    fn bg1d() -> Background {
        build_background(&BackgroundSpec {
            family: Family::FlatInterval { length: 1.0 },
            n: 3,
            m: 1.0,
            nodes: 16,
            nodes_y: 16,
            phi0: Phi0Spec::ZERO,
        })
        .unwrap()
    }

    #[test]
    fn atomic_write_and_field_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let bg = bg1d();
        let w: Field = (0..16).map(|i| 1.0 + (i as f64) * 1e-3).collect();
        let path = dir.path().join("w_final.csv");
        write_atomic(&path, &field_csv(&bg, "w", &w)).unwrap();
        assert!(!path.with_extension("csv.tmp").exists());
        let back = read_field_csv(&path, 16).unwrap();
        assert_eq!(back, w, "17-digit CSV must round-trip doubles bitwise");
    }

    #[test]
    fn read_field_csv_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "w\n1.0\n2.0\n").unwrap();
        assert!(read_field_csv(&path, 3).is_err());
        std::fs::write(&path, "1.0\nnot_a_number\n").unwrap();
        assert!(read_field_csv(&path, 2).is_err());
        std::fs::write(&path, "x,w\n0.0,1.5\n0.5,2.5\n").unwrap();
        assert_eq!(read_field_csv(&path, 2).unwrap(), vec![1.5, 2.5]);
    }

    #[test]
    fn csv_headers_match_contracts() {
        let bg = bg1d();
        let w: Field = vec![1.0; 16];
        assert!(field_csv(&bg, "R", &w).starts_with("x,R\n"));
        let trace = FlowTrace {
            rows: vec![],
            sigma: 1.0,
            p_lyapunov: 2.5,
            tol_conv: 1e-6,
        };
        assert_eq!(
            trace_csv(&trace).trim_end(),
            "t,r,volume_raw,min_R,max_R,min_w,max_w,sup_gap,energy,lambda_p,\
             harnack_ratio_min,harnack_ratio_max,dphi_dt_min"
        );
        let rep = RefinementReport {
            sizes: vec![65, 129],
            errors: vec![1e-3, 2.5e-4],
            order: 2.0,
        };
        let csv = refinement_csv(&rep);
        assert!(csv.starts_with("h,error,order\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
