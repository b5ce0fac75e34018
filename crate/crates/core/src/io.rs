//! CSV and JSON formats for traces, spectra and experiment tables.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! value read back is bit-identical to the one written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{SimulationTrace, TraceMetadata};
use crate::error::{PlatoonError, Result};
use crate::params::PlatoonParams;
use crate::spectral::ModeSpectrum;
use crate::wave::{FlockClassification, FlockVerdict};

pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((0..trace.n_vehicles()).map(|i| format!("e_{i}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (k, t) in trace.times.iter().enumerate() {
        row.clear();
        row.push(t.to_string());
        row.extend(trace.errors.iter().map(|e| e[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Times and per-vehicle series from a trace CSV.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(PlatoonError::Malformed(
            "trace header must start with t and name at least one vehicle".to_string(),
        ));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("e_{i}") {
            return Err(PlatoonError::Malformed(format!("unexpected column {h}")));
        }
    }
    let n = headers.len() - 1;
    let mut times = Vec::new();
    let mut errors = vec![Vec::new(); n];
    for record in r.records() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| PlatoonError::Malformed(format!("bad number {s:?}")))
        };
        times.push(parse(&record[0])?);
        for (i, e) in errors.iter_mut().enumerate() {
            e.push(parse(&record[i + 1])?);
        }
    }
    Ok((times, errors))
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the trace CSV and its metadata sidecar next to it.
pub fn save_trace(trace: &SimulationTrace, csv_path: &Path) -> Result<()> {
    write_trace_csv(trace, BufWriter::new(File::create(csv_path)?))?;
    write_json(&trace.metadata(), &sidecar_path(csv_path))
}

pub fn load_trace(csv_path: &Path) -> Result<SimulationTrace> {
    let meta: TraceMetadata = read_json(&sidecar_path(csv_path))?;
    let (times, errors) = read_trace_csv(BufReader::new(File::open(csv_path)?))?;
    if errors.len() != meta.n + 1 {
        return Err(PlatoonError::DimensionMismatch {
            expected: meta.n + 1,
            got: errors.len(),
        });
    }
    let params = PlatoonParams::new(meta.n, meta.a, meta.gx, meta.gv, meta.rho_x, meta.rho_v)?;
    Ok(SimulationTrace {
        params,
        topology: meta.topology,
        dt: meta.dt,
        t_end: meta.t_end,
        times,
        errors,
        diverged: meta.diverged,
    })
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One row per mode: the three roots, then phase velocity `c_k = -Im ν_k / φ`
/// and damping `α_k = Re ν_k` per root. Velocities are NaN at `φ = 0`.
pub fn write_spectrum_csv<W: Write>(modes: &[ModeSpectrum], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "m", "phi", "re_nu1", "im_nu1", "re_nu2", "im_nu2", "re_nu3", "im_nu3", "c1", "alpha1",
        "c2", "alpha2", "c3", "alpha3",
    ])?;
    for mode in modes {
        let mut row = vec![mode.m.to_string(), mode.phi.to_string()];
        for nu in mode.roots {
            row.push(nu.re.to_string());
            row.push(nu.im.to_string());
        }
        for nu in mode.roots {
            let c = if mode.phi == 0.0 {
                f64::NAN
            } else {
                -nu.im / mode.phi
            };
            row.push(c.to_string());
            row.push(nu.re.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Quantity checked against its asymptotic prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    A1,
    #[serde(rename = "ratio21")]
    Ratio21,
    #[serde(rename = "ratio32")]
    Ratio32,
    T,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [
        Quantity::A1,
        Quantity::Ratio21,
        Quantity::Ratio32,
        Quantity::T,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub chi: Quantity,
    pub pred: f64,
    pub meas: f64,
    /// `log10 |pred/meas - 1|`.
    pub theta: f64,
}

pub fn write_verification_csv<W: Write>(rows: &[VerificationRow], writer: W) -> Result<()> {
    write_rows(rows, writer)
}

pub fn read_verification_csv<R: Read>(reader: R) -> Result<Vec<VerificationRow>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Serializes any flat record type as CSV with a header row.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_to<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    write_rows(rows, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSlopes {
    /// `d ln max|e_N| / dN`.
    pub linear: f64,
    /// `d ln max|e_N| / d ln N`.
    pub log: f64,
    pub sse_linear: f64,
    pub sse_log: f64,
}

/// On-disk layout of a flock classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub params: PlatoonParams,
    pub n_grid: Vec<usize>,
    pub max_errors: Vec<f64>,
    pub diverged: Vec<bool>,
    pub slopes: FitSlopes,
    pub verdict: FlockVerdict,
}

impl From<&FlockClassification> for ClassificationReport {
    fn from(c: &FlockClassification) -> Self {
        Self {
            params: c.params,
            n_grid: c.n_grid.clone(),
            max_errors: c.max_errors.clone(),
            diverged: c.diverged.clone(),
            slopes: FitSlopes {
                linear: c.slope_linear,
                log: c.slope_log,
                sse_linear: c.sse_linear,
                sse_log: c.sse_log,
            },
            verdict: c.verdict,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, PlatoonSystem, SimOptions, StateVector};
    use crate::params::Topology;
    use crate::spectral::spectral_scan;
    use crate::wave::integrated_abs_error;

    fn small_trace() -> SimulationTrace {
        let p = PlatoonParams::tuned(5);
        let sys = PlatoonSystem::new(p, Topology::Path).unwrap();
        simulate(
            &sys,
            &StateVector::leader_step(5),
            &SimOptions::new(0.01, 3.0),
        )
        .unwrap()
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = small_trace();
        save_trace(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,e_0,e_1,e_2,e_3,e_4,e_5\n"));
        let back = load_trace(&path).unwrap();
        assert_eq!(back, trace);
        let a = integrated_abs_error(&trace).theta;
        let b = integrated_abs_error(&back).theta;
        assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn sidecar_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        save_trace(&small_trace(), &path).unwrap();
        let v: serde_json::Value = read_json(&sidecar_path(&path)).unwrap();
        for key in [
            "N", "a", "gx", "gv", "rho_x", "rho_v", "topology", "dt", "t_end", "diverged",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["topology"], "path");
    }

    #[test]
    fn malformed_trace_rejected() {
        assert!(read_trace_csv("x,e_0\n1,2\n".as_bytes()).is_err());
        assert!(read_trace_csv("t,e_1\n1,2\n".as_bytes()).is_err());
        assert!(read_trace_csv("t,e_0\n1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn spectrum_layout() {
        let scan = spectral_scan(&PlatoonParams::tuned(3)).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&scan.modes, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "m,phi,re_nu1,im_nu1,re_nu2,im_nu2,re_nu3,im_nu3,c1,alpha1,c2,alpha2,c3,alpha3"
        );
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn verification_round_trip() {
        let rows = vec![
            VerificationRow {
                n: 40,
                chi: Quantity::A1,
                pred: 21.7,
                meas: 20.1,
                theta: -1.1,
            },
            VerificationRow {
                n: 40,
                chi: Quantity::Ratio32,
                pred: 0.45,
                meas: 0.5,
                theta: -0.9,
            },
        ];
        let mut buf = Vec::new();
        write_verification_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("N,chi,pred,meas,theta\n40,A1,"));
        assert!(text.contains("ratio32"));
        assert_eq!(read_verification_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn classification_layout() {
        let c = FlockClassification {
            params: PlatoonParams::tuned(25),
            n_grid: vec![25, 50, 100, 200],
            max_errors: vec![1.0, 2.0, 4.0, 8.0],
            diverged: vec![false; 4],
            slope_linear: 0.01,
            slope_log: 1.0,
            sse_linear: 0.2,
            sse_log: 0.0,
            verdict: FlockVerdict::FlockStable,
        };
        let v = serde_json::to_value(ClassificationReport::from(&c)).unwrap();
        for key in ["params", "n_grid", "max_errors", "slopes", "verdict"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["verdict"], "flock-stable");
        assert_eq!(v["params"]["rho_v"], 0.4);
    }
}
