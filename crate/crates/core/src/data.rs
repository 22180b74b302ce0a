//! Dataset generation, CSV/IDX loading, min-max normalization and splitting.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::shuffle;
use crate::rng::stream_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub data: Matrix,
    pub labels: Option<Vec<i64>>,
    pub column_min: Vec<f64>,
    pub column_max: Vec<f64>,
    pub normalized: bool,
}

impl Dataset {
    pub fn new(data: Matrix, labels: Option<Vec<i64>>) -> Self {
        let n = data.cols;
        Dataset {
            data,
            labels,
            column_min: vec![0.0; n],
            column_max: vec![1.0; n],
            normalized: false,
        }
    }

    pub fn rows(&self) -> usize {
        self.data.rows
    }

    pub fn cols(&self) -> usize {
        self.data.cols
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyKind {
    SwissRoll,
    SCurve,
    Fishbowl,
}

impl ToyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "swiss_roll" => Ok(ToyKind::SwissRoll),
            "s_curve" => Ok(ToyKind::SCurve),
            "fishbowl" => Ok(ToyKind::Fishbowl),
            other => Err(Error::InvalidArgument(format!("unknown toy kind {other}"))),
        }
    }
}

/// Default polar-cap half-angle of the fishbowl opening, radians.
pub const FISHBOWL_CAP_ANGLE: f64 = PI / 3.0;

pub fn swiss_roll_point(t: f64, y: f64) -> [f64; 3] {
    [t * t.cos(), y, t * t.sin()]
}

pub fn s_curve_point(t: f64, y: f64) -> [f64; 3] {
    [t.sin(), y, t.signum() * (t.cos() - 1.0)]
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Parametric 3-D manifolds with isotropic Gaussian perturbation of scale
/// `noise`, deterministic under the seed.
pub fn gen_toy(kind: ToyKind, m: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::Empty("gen_toy with zero samples".into()));
    }
    if noise < 0.0 {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let mut rng = stream_rng(seed, "gen-toy");
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut p = match kind {
            ToyKind::SwissRoll => {
                let t = rng.gen_range(1.5 * PI..4.5 * PI);
                let y = rng.gen_range(0.0..21.0);
                swiss_roll_point(t, y)
            }
            ToyKind::SCurve => {
                let t = rng.gen_range(-1.5 * PI..1.5 * PI);
                let y = rng.gen_range(0.0..2.0);
                s_curve_point(t, y)
            }
            ToyKind::Fishbowl => {
                // unit sphere with the polar cap above the opening removed;
                // z uniform in [-1, cos(cap)] gives uniform area on the rest
                let z = rng.gen_range(-1.0..FISHBOWL_CAP_ANGLE.cos());
                let phi = rng.gen_range(0.0..2.0 * PI);
                let r = (1.0 - z * z).sqrt();
                [r * phi.cos(), r * phi.sin(), z]
            }
        };
        if noise > 0.0 {
            for v in &mut p {
                *v += noise * gaussian(&mut rng);
            }
        }
        rows.push(p.to_vec());
    }
    Ok(Dataset::new(Matrix::from_rows(rows), None))
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        col,
        msg: format!("non-numeric cell '{}'", cell.trim()),
    })
}

/// Parses a rectangular numeric CSV. A non-numeric first row is treated as a
/// header and skipped. `label_column` extracts integer labels.
pub fn load_csv(path: &Path, label_column: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, label_column)
}

pub fn parse_csv(text: &str, label_column: Option<usize>) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    // header detection: any cell of the first row non-numeric
    if let Some((_, first)) = lines.peek() {
        let is_header = first
            .split(',')
            .any(|c| c.trim().parse::<f64>().is_err());
        if is_header {
            lines.next();
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    row: lineno + 1,
                    col: cells.len(),
                    msg: format!("ragged row: {} cells, expected {}", cells.len(), w),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(cells.len());
        for (ci, cell) in cells.iter().enumerate() {
            if Some(ci) == label_column {
                let v = parse_cell(cell, lineno + 1, ci + 1)?;
                labels.push(v.round() as i64);
            } else {
                row.push(parse_cell(cell, lineno + 1, ci + 1)?);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("CSV has no data rows".into()));
    }
    Ok(Dataset::new(
        Matrix::from_rows(rows),
        if label_column.is_some() {
            Some(labels)
        } else {
            None
        },
    ))
}

/// Fits per-column min/max on the data and maps into [0,1]. Constant columns
/// map to 0.5.
pub fn minmax_fit_apply(mut ds: Dataset) -> Dataset {
    let n = ds.cols();
    let mut mins = vec![f64::INFINITY; n];
    let mut maxs = vec![f64::NEG_INFINITY; n];
    for r in 0..ds.rows() {
        for (c, &v) in ds.data.row(r).iter().enumerate() {
            mins[c] = mins[c].min(v);
            maxs[c] = maxs[c].max(v);
        }
    }
    apply_norm(&mut ds.data, &mins, &maxs);
    ds.column_min = mins;
    ds.column_max = maxs;
    ds.normalized = true;
    ds
}

/// Applies a previously fitted normalization; out-of-range values clamp to
/// [0,1].
pub fn minmax_apply(mut ds: Dataset, mins: &[f64], maxs: &[f64]) -> Dataset {
    apply_norm(&mut ds.data, mins, maxs);
    ds.column_min = mins.to_vec();
    ds.column_max = maxs.to_vec();
    ds.normalized = true;
    ds
}

fn apply_norm(data: &mut Matrix, mins: &[f64], maxs: &[f64]) {
    for r in 0..data.rows {
        for (c, v) in data.row_mut(r).iter_mut().enumerate() {
            let range = maxs[c] - mins[c];
            *v = if range == 0.0 {
                0.5
            } else {
                ((*v - mins[c]) / range).clamp(0.0, 1.0)
            };
        }
    }
}

/// Maps normalized values back to original units.
pub fn minmax_invert(data: &mut Matrix, mins: &[f64], maxs: &[f64]) {
    for r in 0..data.rows {
        for (c, v) in data.row_mut(r).iter_mut().enumerate() {
            *v = mins[c] + *v * (maxs[c] - mins[c]);
        }
    }
}

/// Disjoint shuffled partition; label vectors are permuted consistently.
pub fn split(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| f <= 0.0) || total > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(
            "fractions must be positive and sum to at most 1".into(),
        ));
    }
    let m = ds.rows();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng: ChaCha8Rng = stream_rng(seed, "split");
    shuffle(&mut order, &mut rng);
    let mut sizes: Vec<usize> = fractions.iter().map(|f| (f * m as f64).round() as usize).collect();
    // last partition absorbs rounding when the fractions sum to 1
    if (total - 1.0).abs() < 1e-12 {
        let assigned: usize = sizes[..sizes.len() - 1].iter().sum();
        *sizes.last_mut().unwrap() = m - assigned;
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument(
            "a partition would be smaller than one row".into(),
        ));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for s in sizes {
        let idx = &order[off..off + s];
        off += s;
        let data = ds.data.select_rows(idx);
        let labels = ds
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        out.push(Dataset {
            data,
            labels,
            column_min: ds.column_min.clone(),
            column_max: ds.column_max.clone(),
            normalized: ds.normalized,
        });
    }
    Ok(out)
}

/// Reads a big-endian IDX image file, flattening images and scaling to [0,1].
pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(Error::Malformed("not an unsigned-byte IDX file".into()));
    }
    let ndim = bytes[3] as usize;
    if bytes.len() < 4 + 4 * ndim {
        return Err(Error::Malformed("truncated IDX header".into()));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 4 + 4 * i;
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
    }
    let count = dims[0];
    let width: usize = dims[1..].iter().product::<usize>().max(1);
    let body = &bytes[4 + 4 * ndim..];
    if body.len() != count * width {
        return Err(Error::Malformed("IDX payload size mismatch".into()));
    }
    let data = body.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Matrix::from_vec(count, width, data))
}
