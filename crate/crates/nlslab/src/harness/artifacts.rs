//! CSV/JSON artefacts with fixed, versioned schemas, and a gnuplot script
//! that plots whichever tables were produced.
//!
//! Every CSV begins with one comment line `# nlslab <table> v<version>`
//! followed by a header row whose column order is the field order of the row
//! type below. Floats are written in shortest round-trip form, so identical
//! inputs give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::energy::EnergyStudy;
use crate::harness::experiments::{ConvergenceStudy, DispersionSample, ResidualStudy};
use crate::normal_form::{Family, KernelSpec, NormalForm, SIGNS};

/// Version shared by every table schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Table names, in plot order.
pub const TABLES: [&str; 7] = [
    "convergence",
    "convergence_series",
    "residual",
    "carrier_phase",
    "dispersion",
    "energy",
    "kernels",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub sup_error: f64,
    pub t_sup: f64,
    pub sup_error_l2: f64,
    pub magnitude: f64,
    pub tail_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub eps: f64,
    pub t: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierPhaseRow {
    pub eps: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub eps: f64,
    pub t: f64,
    pub energy: f64,
    pub modified_minus: f64,
    pub modified_plus: f64,
    pub base: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub family: String,
    pub n: u8,
    pub j1: i32,
    pub j2: i32,
    pub k: f64,
    pub l: f64,
    pub m: f64,
    pub re: f64,
    pub im: f64,
}

/// Exact bytes of table `name` holding `rows`.
pub fn table_bytes<R: Serialize>(name: &str, rows: &[R]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# nlslab {name} v{SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(&mut buf);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    Ok(buf)
}

/// Write `rows` as table `name` to `dir/name.csv`.
pub fn write_table<R: Serialize>(dir: &Path, name: &str, rows: &[R]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    fs::write(&path, table_bytes(name, rows)?)?;
    Ok(path)
}

/// Pretty-printed JSON artefact.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

pub fn convergence_rows(study: &ConvergenceStudy) -> (Vec<ConvergenceRow>, Vec<SeriesRow>) {
    let rows = study
        .records
        .iter()
        .map(|r| ConvergenceRow {
            eps: r.eps,
            sup_error: r.sup_error,
            t_sup: r.t_sup,
            sup_error_l2: r.sup_error_l2,
            magnitude: r.magnitude,
            tail_mass: r.tail_mass,
        })
        .collect();
    let series = study
        .records
        .iter()
        .flat_map(|r| r.series.iter().map(move |&(t, error)| SeriesRow { eps: r.eps, t, error }))
        .collect();
    (rows, series)
}

pub fn write_convergence(dir: &Path, study: &ConvergenceStudy) -> Result<()> {
    let (rows, series) = convergence_rows(study);
    write_table(dir, "convergence", &rows)?;
    write_table(dir, "convergence_series", &series)?;
    Ok(())
}

pub fn write_residual(dir: &Path, study: &ResidualStudy) -> Result<()> {
    write_table(dir, "residual", &study.rows)?;
    Ok(())
}

pub fn write_carrier_phase(dir: &Path, eps: &[f64], norms: &[f64]) -> Result<()> {
    let rows: Vec<CarrierPhaseRow> = eps.iter().zip(norms).map(|(&eps, &norm)| CarrierPhaseRow { eps, norm }).collect();
    write_table(dir, "carrier_phase", &rows)?;
    Ok(())
}

pub fn write_dispersion(dir: &Path, samples: &[DispersionSample]) -> Result<()> {
    write_table(dir, "dispersion", samples)?;
    Ok(())
}

pub fn energy_rows(studies: &[EnergyStudy]) -> Vec<EnergyRow> {
    studies
        .iter()
        .flat_map(|s| {
            s.samples.iter().map(move |x| EnergyRow {
                eps: s.eps,
                t: x.t,
                energy: x.energy,
                modified_minus: x.modified_minus,
                modified_plus: x.modified_plus,
                base: x.base,
                ratio: x.ratio,
            })
        })
        .collect()
}

pub fn write_energy(dir: &Path, studies: &[EnergyStudy]) -> Result<()> {
    write_table(dir, "energy", &energy_rows(studies))?;
    Ok(())
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Alpha => "alpha",
        Family::B01 => "b01",
        Family::B10 => "b10",
        Family::B11 => "b11",
        Family::B115 => "b115",
        Family::SPrinted => "s_printed",
        Family::SExact => "s_exact",
    }
}

/// Scan of one kernel family with the carrier frozen at `l = k₀`, over the
/// family's natural output range: `|k| ≤ δ` for `b01`, `|k − k₀| ≤ δ` for
/// `b10`, `δ < k ≤ 40` otherwise. `points` samples per `(n, j₁, j₂)`.
pub fn kernel_scan(nf: &NormalForm, family: Family, points: usize) -> Result<Vec<KernelRow>> {
    let (d, k0) = (nf.delta(), nf.k0);
    let (lo, hi) = match family {
        Family::B01 => (-d, d),
        Family::B10 => (k0 - 0.999 * d, k0 + 0.999 * d),
        _ => (k0 + 1.001 * d, 40.0),
    };
    let ns: Vec<u8> = match family {
        Family::B115 => vec![5],
        Family::SPrinted | Family::SExact => (1..=4).collect(),
        _ => (1..=5).collect(),
    };
    let mut rows = Vec::new();
    for &n in &ns {
        for j1 in SIGNS {
            for j2 in SIGNS {
                let spec = KernelSpec::new(family, n, j1, j2);
                for i in 0..points {
                    let k = lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64;
                    let v = nf.eval(&spec, k, k0, k - k0)?;
                    rows.push(KernelRow {
                        family: family_name(family).to_string(),
                        n,
                        j1,
                        j2,
                        k,
                        l: k0,
                        m: k - k0,
                        re: v.re,
                        im: v.im,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Write `dir/plots.gp`, plotting every table of [`TABLES`] present in `dir`.
pub fn emit_plot_script(dir: &Path) -> Result<PathBuf> {
    let present = |t: &str| dir.join(format!("{t}.csv")).exists();
    let mut s = String::from("# gnuplot script generated by nlslab\nset datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n");
    let mut add = |name: &str, body: &str| {
        if present(name) {
            s.push_str(&format!("\nset output '{name}.png'\n{body}\n"));
        }
    };
    add(
        "convergence",
        "set logscale xy\nset xlabel 'eps'\nset ylabel 'sup H^s error'\nplot 'convergence.csv' using 1:2 with linespoints title 'error', '' using 1:5 with linespoints title 'magnitude'\nunset logscale",
    );
    add(
        "convergence_series",
        "set xlabel 't'\nset ylabel 'H^s error'\nplot 'convergence_series.csv' using 2:3 with points pointtype 7 pointsize 0.4 title 'error(t)'",
    );
    add(
        "carrier_phase",
        "set logscale xy\nset xlabel 'eps'\nset ylabel 'phase defect'\nplot 'carrier_phase.csv' using 1:2 with linespoints title 'defect'\nunset logscale",
    );
    add(
        "dispersion",
        "set xlabel 'k'\nset ylabel 'omega'\nplot 'dispersion.csv' using 1:2 with points title 'measured', '' using 1:3 with lines title 'exact'",
    );
    add(
        "energy",
        "set xlabel 't'\nset ylabel 'energy'\nplot 'energy.csv' using 2:4 with lines title 'modified (-)', '' using 2:5 with lines title 'modified (+)', '' using 2:6 with lines title 'base'",
    );
    add(
        "kernels",
        "set xlabel 'k'\nset ylabel 'kernel'\nplot 'kernels.csv' using 5:8 with points pointtype 7 pointsize 0.3 title 'Re'",
    );
    let path = dir.join("plots.gp");
    fs::create_dir_all(dir)?;
    fs::write(&path, s)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![CarrierPhaseRow { eps: 0.1, norm: 2.5e-3 }, CarrierPhaseRow { eps: 0.05, norm: 6.25e-4 }];
        let p = write_table(dir.path(), "carrier_phase", &rows).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text, "# nlslab carrier_phase v1\neps,norm\n0.1,0.0025\n0.05,0.000625\n");
    }

    #[test]
    fn plot_script_references_only_produced_tables() {
        let dir = tempfile::tempdir().unwrap();
        write_table(dir.path(), "dispersion", &[CarrierPhaseRow { eps: 1.0, norm: 1.0 }]).unwrap();
        let p = emit_plot_script(dir.path()).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.contains("'dispersion.csv'"));
        for t in TABLES.iter().filter(|t| **t != "dispersion") {
            assert!(!text.contains(&format!("'{t}.csv'")), "{t}");
        }
    }

    #[test]
    fn kernel_scan_is_finite() {
        let nf = NormalForm::new(1.0, 0.05, 0.1).unwrap();
        for f in [Family::B01, Family::B10, Family::B11, Family::B115, Family::SPrinted, Family::SExact, Family::Alpha] {
            let rows = kernel_scan(&nf, f, 17).unwrap();
            assert!(!rows.is_empty());
            assert!(rows.iter().all(|r| r.re.is_finite() && r.im.is_finite()), "{f:?}");
        }
    }
}
