//! Datasets, tail thresholds and exceedance extraction.
//!
//! A [`Dataset`] holds the raw response and design. Estimation never touches
//! it directly: callers pick a threshold with [`select_threshold`] and cut the
//! exceedance subsample with [`extract_tail`], which precomputes the
//! log-exceedances `m_i = log(Y_i / omega)` once.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Binary indicator matrix in compressed-row form. Stored entries equal 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBinary {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl SparseBinary {
    /// Builds the matrix from per-row column lists. Duplicates are merged.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            if let Some(&c) = r.last() {
                if c >= ncols {
                    return Err(Error::InvalidInput(format!("column {c} out of range for width {ncols}")));
                }
            }
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        Ok(Self { nrows: row_ptr.len() - 1, ncols, row_ptr, cols })
    }

    /// Builds the matrix from `(row, col)` coordinates of the nonzero entries.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c) in entries {
            if r >= nrows {
                return Err(Error::InvalidInput(format!("row {r} out of range for {nrows} rows")));
            }
            rows[r].push(c);
        }
        Self::from_rows(ncols, rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Column indices of the ones in row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for &c in self.row(i) {
                m[(i, c)] = 1.0;
            }
        }
        m
    }

    /// `(row, col)` pairs in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).iter().map(move |&c| (i, c)))
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.ncols];
        for &c in &self.cols {
            sums[c] += 1;
        }
        sums
    }
}

/// Design matrix storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Dense(DMatrix<f64>),
    SparseBinary(SparseBinary),
}

impl Design {
    pub fn nrows(&self) -> usize {
        match self {
            Design::Dense(m) => m.nrows(),
            Design::SparseBinary(s) => s.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Design::Dense(m) => m.ncols(),
            Design::SparseBinary(s) => s.ncols(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Design::Dense(m) => m.clone(),
            Design::SparseBinary(s) => s.to_dense(),
        }
    }

    /// Dense copy of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DMatrix<f64> {
        match self {
            Design::Dense(m) => m.select_rows(idx),
            Design::SparseBinary(s) => {
                let mut out = DMatrix::zeros(idx.len(), s.ncols());
                for (k, &i) in idx.iter().enumerate() {
                    for &c in s.row(i) {
                        out[(k, c)] = 1.0;
                    }
                }
                out
            }
        }
    }
}

/// Response vector plus covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Design,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Design, feature_names: Option<Vec<String>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: x.nrows() });
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::DimensionMismatch { expected: x.ncols(), got: names.len() });
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("response contains non-finite values".into()));
        }
        Ok(Self { y, x, feature_names })
    }

    pub fn dense(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        Self::new(y, Design::Dense(x), None)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Name of feature `j`, falling back to `x{j}` (1-based) when unnamed.
    pub fn feature_name(&self, j: usize) -> String {
        match &self.feature_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }
}

/// Exceedances above a threshold, ready for likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSample {
    omega: f64,
    rows: DMatrix<f64>,
    log_exceedances: DVector<f64>,
    source_indices: Vec<usize>,
}

impl TailSample {
    /// Assembles a tail sample from precomputed parts.
    ///
    /// Every log-exceedance must be strictly positive and match a row of `rows`.
    pub fn from_parts(
        omega: f64,
        rows: DMatrix<f64>,
        log_exceedances: DVector<f64>,
        source_indices: Vec<usize>,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!("threshold must be positive, got {omega}")));
        }
        let n0 = log_exceedances.len();
        if rows.nrows() != n0 {
            return Err(Error::DimensionMismatch { expected: n0, got: rows.nrows() });
        }
        if source_indices.len() != n0 {
            return Err(Error::DimensionMismatch { expected: n0, got: source_indices.len() });
        }
        if n0 == 0 {
            return Err(Error::EmptyTail { omega });
        }
        if let Some(bad) = log_exceedances.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidInput(format!("log-exceedance {bad} is not strictly positive")));
        }
        Ok(Self { omega, rows, log_exceedances, source_indices })
    }

    /// Tail sample from covariate rows and log-exceedances with a unit threshold.
    pub fn from_log_exceedances(rows: DMatrix<f64>, log_exceedances: DVector<f64>) -> Result<Self> {
        let idx = (0..log_exceedances.len()).collect();
        Self::from_parts(1.0, rows, log_exceedances, idx)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn log_exceedances(&self) -> &DVector<f64> {
        &self.log_exceedances
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    /// Effective sample size.
    pub fn n0(&self) -> usize {
        self.log_exceedances.len()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    /// Subsample on positions `idx` (positions within this tail, not source rows).
    pub fn subset(&self, idx: &[usize]) -> Result<TailSample> {
        if idx.is_empty() {
            return Err(Error::EmptyTail { omega: self.omega });
        }
        let rows = self.rows.select_rows(idx);
        let m = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.log_exceedances[i]));
        let src = idx.iter().map(|&i| self.source_indices[i]).collect();
        Ok(TailSample { omega: self.omega, rows, log_exceedances: m, source_indices: src })
    }
}

/// Type-1 empirical quantile: the `ceil(level * n)`-th smallest value.
pub fn select_threshold(y: &[f64], level: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidInput("cannot take a quantile of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("quantile level must lie in (0,1), got {level}")));
    }
    let n = y.len();
    let raw = level * n as f64;
    // 0.95 * 10_000 must give index 9500, not 9501
    let k = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    let k = (k as usize).clamp(1, n);
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Keeps the rows with `y > omega` strictly, in original order.
pub fn extract_tail(data: &Dataset, omega: f64) -> Result<TailSample> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {omega}")));
    }
    let idx: Vec<usize> = (0..data.n()).filter(|&i| data.y[i] > omega).collect();
    if idx.is_empty() {
        return Err(Error::EmptyTail { omega });
    }
    let m = DVector::from_iterator(idx.len(), idx.iter().map(|&i| (data.y[i] / omega).ln()));
    let rows = data.x.select_rows(&idx);
    TailSample::from_parts(omega, rows, m, idx)
}

/// Threshold at `level` followed by [`extract_tail`].
pub fn tail_at_level(data: &Dataset, level: f64) -> Result<TailSample> {
    let omega = select_threshold(&data.y, level)?;
    extract_tail(data, omega)
}

/// Rank / log-response pairs for a log-log diagnostic plot.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLogPlot {
    /// `(rank, log y)` with rank 1 for the largest response.
    pub points: Vec<(usize, f64)>,
    /// Number of nonpositive responses that were dropped.
    pub dropped: usize,
}

impl LogLogPlot {
    /// Least-squares slope of `log y` on `log rank` over the top `fraction` of points.
    pub fn slope(&self, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidInput(format!("fraction must lie in (0,1], got {fraction}")));
        }
        let k = ((self.points.len() as f64 * fraction).ceil() as usize).min(self.points.len());
        if k < 2 {
            return Err(Error::InvalidInput("need at least two points for a slope".into()));
        }
        let pts = &self.points[..k];
        let xs: Vec<f64> = pts.iter().map(|(r, _)| (*r as f64).ln()).collect();
        let mx = xs.iter().sum::<f64>() / k as f64;
        let my = pts.iter().map(|(_, l)| l).sum::<f64>() / k as f64;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, (_, l)) in xs.iter().zip(pts) {
            sxy += (x - mx) * (l - my);
            sxx += (x - mx) * (x - mx);
        }
        Ok(sxy / sxx)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["rank", "log_y"])?;
        for (r, l) in &self.points {
            wtr.write_record([r.to_string(), format_float(*l)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Descending rank plot of the positive responses.
pub fn loglog_points(y: &[f64]) -> Result<LogLogPlot> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty response vector".into()));
    }
    let mut pos: Vec<f64> = y.iter().copied().filter(|v| *v > 0.0).collect();
    let dropped = y.len() - pos.len();
    if pos.is_empty() {
        return Err(Error::InvalidInput("all responses are nonpositive".into()));
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let points = pos.iter().enumerate().map(|(i, v)| (i + 1, v.ln())).collect();
    Ok(LogLogPlot { points, dropped })
}

/// Shortest round-trip decimal representation.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a dense dataset from CSV with a header row. `response` names the
/// response column; every other column is a numeric feature.
pub fn read_dataset_csv<R: Read>(reader: R, response: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let yi = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Parse { line: 1, message: format!("response column '{response}' not found") })?;
    let names: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != yi).map(|(_, h)| h.clone()).collect();
    let p = names.len();
    let mut y = Vec::new();
    let mut vals = Vec::new();
    for (rec_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rec_no + 2);
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("not a number: '{s}'") })
        };
        for (i, field) in rec.iter().enumerate() {
            let v = parse(field)?;
            if i == yi {
                if v < 0.0 {
                    return Err(Error::Parse { line, message: format!("negative response {v}") });
                }
                y.push(v);
            } else {
                vals.push(v);
            }
        }
    }
    let x = DMatrix::from_row_slice(y.len(), p, &vals);
    Dataset::new(y, Design::Dense(x), Some(names))
}

/// Reads a `row,col,value` triplet file (0-based, header row) into a sparse
/// binary matrix. Values other than 1 are rejected.
pub fn read_triplets<R: Read>(reader: R, nrows: usize, ncols: usize) -> Result<SparseBinary> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |m: String| Error::Parse { line, message: m };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let r: usize = rec[0].parse().map_err(|_| bad(format!("bad row index '{}'", &rec[0])))?;
        let c: usize = rec[1].parse().map_err(|_| bad(format!("bad column index '{}'", &rec[1])))?;
        let v: f64 = rec[2].parse().map_err(|_| bad(format!("bad value '{}'", &rec[2])))?;
        if v != 1.0 {
            return Err(bad(format!("binary design expects value 1, got {v}")));
        }
        if c >= ncols || r >= nrows {
            return Err(bad(format!("entry ({r},{c}) outside {nrows}x{ncols}")));
        }
        entries.push((r, c));
    }
    SparseBinary::from_triplets(nrows, ncols, &entries)
}

pub fn write_triplets<W: Write>(m: &SparseBinary, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["row", "col", "value"])?;
    for (r, c) in m.triplets() {
        wtr.write_record([r.to_string(), c.to_string(), "1".to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a single-column response file with header `y`.
pub fn read_response<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let v: f64 = rec
            .get(rec.len().saturating_sub(1))
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Parse { line, message: "bad response value".into() })?;
        if v < 0.0 {
            return Err(Error::Parse { line, message: format!("negative response {v}") });
        }
        y.push(v);
    }
    Ok(y)
}

pub fn write_response<W: Write>(y: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["y"])?;
    for v in y {
        wtr.write_record([format_float(*v)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Loads a sparse binary dataset from a triplet file, a response file and a
/// vocabulary sidecar (one feature name per line).
pub fn read_sparse_dataset(triplets: &Path, response: &Path, vocabulary: &Path) -> Result<Dataset> {
    let y = read_response(std::fs::File::open(response)?)?;
    let names: Vec<String> =
        std::fs::read_to_string(vocabulary)?.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
    let x = read_triplets(std::fs::File::open(triplets)?, y.len(), names.len())?;
    Dataset::new(y, Design::SparseBinary(x), Some(names))
}
