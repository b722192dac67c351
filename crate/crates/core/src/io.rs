//! Serialization formats: JSON documents (matrices row-major with explicit
//! dims) and the CSV layouts for trajectories, chaos coefficients and
//! histograms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::RealTrajectory;
use crate::pce::{HistogramBin, PceTrajectory};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl TryFrom<MatrixDoc> for DMatrix<f64> {
    type Error = String;
    fn try_from(d: MatrixDoc) -> std::result::Result<Self, String> {
        if d.rows * d.cols != d.data.len() {
            return Err(format!("matrix {}x{} has {} entries", d.rows, d.cols, d.data.len()));
        }
        Ok(DMatrix::from_row_slice(d.rows, d.cols, &d.data))
    }
}

pub mod matrix_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixDoc::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let doc = MatrixDoc::deserialize(d)?;
        DMatrix::try_from(doc).map_err(serde::de::Error::custom)
    }
}

pub mod vector_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod vectors_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DVector<f64>>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(DVector::from_vec).collect())
    }
}

pub mod opt_vectors_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<DVector<f64>>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Option<Vec<&[f64]>> = v.as_ref().map(|v| v.iter().map(|x| x.as_slice()).collect());
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<DVector<f64>>>, D::Error> {
        Ok(Option::<Vec<Vec<f64>>>::deserialize(d)?.map(|v| v.into_iter().map(DVector::from_vec).collect()))
    }
}

pub mod matrices_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let docs: Vec<MatrixDoc> = v.iter().map(MatrixDoc::from).collect();
        docs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<MatrixDoc>::deserialize(d)?
            .into_iter()
            .map(|m| DMatrix::try_from(m).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    ensure_parent(path)?;
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x:?}")
}

/// Header `k,u_1..u_nu,y_1..y_ny[,w_1..w_nw]`.
pub fn write_trajectory_csv(path: &Path, t: &RealTrajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend((1..=t.n_u).map(|i| format!("u_{i}")));
    header.extend((1..=t.n_y).map(|i| format!("y_{i}")));
    header.extend((1..=t.n_w()).map(|i| format!("w_{i}")));
    w.write_record(&header)?;
    for i in 0..t.len() {
        let mut rec = vec![(t.start + i as i64).to_string()];
        rec.extend(t.u[i].iter().map(|&x| fmt(x)));
        rec.extend(t.y[i].iter().map(|&x| fmt(x)));
        if let Some(ws) = &t.w {
            rec.extend(ws[i].iter().map(|&x| fmt(x)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<RealTrajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let count = |p: &str| header.iter().filter(|h| h.starts_with(p)).count();
    let (nu, ny, nw) = (count("u_"), count("y_"), count("w_"));
    if header.get(0) != Some("k") || 1 + nu + ny + nw != header.len() {
        return Err(dim_err(format!("unexpected trajectory header in {}", path.display())));
    }
    let (mut us, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    let mut start = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let k: i64 = rec[0].trim().parse().map_err(|_| dim_err("bad time index"))?;
        let s = *start.get_or_insert(k);
        if k != s + i as i64 {
            return Err(dim_err("time index not contiguous"));
        }
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| dim_err("non-numeric entry"))?;
        us.push(DVector::from_row_slice(&vals[..nu]));
        ys.push(DVector::from_row_slice(&vals[nu..nu + ny]));
        if nw > 0 {
            ws.push(DVector::from_row_slice(&vals[nu + ny..]));
        }
    }
    RealTrajectory::with_dims(start.unwrap_or(0), nu, ny, us, ys, (nw > 0).then_some(ws))
}

/// Rows `k,j,component,value`; components are 1-based.
pub fn write_pce_csv(path: &Path, t: &PceTrajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "j", "component", "value"])?;
    for (i, c) in t.coeffs.iter().enumerate() {
        let k = t.start + i as i64;
        for j in 0..c.ncols() {
            for comp in 0..c.nrows() {
                w.write_record(&[k.to_string(), j.to_string(), (comp + 1).to_string(), fmt(c[(comp, j)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pce_csv(path: &Path, dim: usize, basis_len: usize) -> Result<PceTrajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows: Vec<(i64, usize, usize, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |_| dim_err("bad coefficient row");
        rows.push((
            rec[0].trim().parse().map_err(|_| dim_err("bad k"))?,
            rec[1].trim().parse().map_err(|_| dim_err("bad j"))?,
            rec[2].trim().parse().map_err(|_| dim_err("bad component"))?,
            rec[3].trim().parse().map_err(bad)?,
        ));
    }
    let start = rows.iter().map(|r| r.0).min().unwrap_or(0);
    let end = rows.iter().map(|r| r.0).max().unwrap_or(start - 1);
    let len = (end - start + 1).max(0) as usize;
    let mut t = PceTrajectory::zeros(start, len, dim, basis_len);
    for (k, j, c, v) in rows {
        if j >= basis_len || c == 0 || c > dim {
            return Err(Error::IndexOutOfRange { index: j.max(c), len: basis_len.max(dim) });
        }
        t.coeffs[(k - start) as usize][(c - 1, j)] = v;
    }
    Ok(t)
}

/// Rows `k,bin_left,bin_right,density`.
pub fn write_histogram_csv(path: &Path, hist: &[(i64, Vec<HistogramBin>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "bin_left", "bin_right", "density"])?;
    for (k, bins) in hist {
        for b in bins {
            w.write_record(&[k.to_string(), fmt(b.left), fmt(b.right), fmt(b.density)])?;
        }
    }
    w.flush()?;
    Ok(())
}
