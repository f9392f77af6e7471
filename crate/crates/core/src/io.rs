//! File formats: Matrix Market for operators and bases, CSV for spectra, and a git-style
//! content hash for run manifests. Numbers are written with 17 significant digits so every
//! `f64` round-trips exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{SparseSym, SymmetricOperator};

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `op` as a `coordinate real symmetric` Matrix Market file (lower triangle, 1-based).
pub fn write_operator_mtx<W: Write>(mut w: W, op: &SymmetricOperator) -> Result<()> {
    let s = op.to_sparse()?;
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", s.dim(), s.dim(), s.nnz())?;
    for (i, j, a) in s.upper_triplets() {
        writeln!(w, "{} {} {}", j + 1, i + 1, fmt_f64(a))?;
    }
    Ok(())
}

/// Writes a dense matrix as a `array real general` Matrix Market file (column-major).
pub fn write_dense_mtx<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for a in m.iter() {
        writeln!(w, "{}", fmt_f64(*a))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

fn parse_header(line: &str) -> Result<Header> {
    let t: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if t.len() != 5 || t[0] != "%%matrixmarket" || t[1] != "matrix" {
        return Err(Error::Parse(format!(
            "not a Matrix Market header: {line:?}"
        )));
    }
    let layout = match t[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(Error::Parse(format!("unsupported layout {other:?}"))),
    };
    if t[3] != "real" && t[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field {:?}", t[3])));
    }
    let symmetry = match t[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::Parse(format!("unsupported symmetry {other:?}"))),
    };
    Ok(Header { layout, symmetry })
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
}

fn parse_f64(tok: Option<&str>) -> Result<f64> {
    let v: f64 = tok
        .ok_or_else(|| Error::Parse("missing value".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad value: {e}")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite("Matrix Market value"));
    }
    Ok(v)
}

enum Parsed {
    Sparse(SparseSym),
    Dense(DMatrix<f64>),
}

fn parse_mtx(text: &str) -> Result<Parsed> {
    let mut lines = text.lines();
    let header = parse_header(
        lines
            .next()
            .ok_or_else(|| Error::Parse("empty file".into()))?,
    )?;
    let mut body = lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = body
        .next()
        .ok_or_else(|| Error::Parse("missing size line".into()))?;
    let mut it = size.split_whitespace();
    let rows = parse_usize(it.next(), "row count")?;
    let cols = parse_usize(it.next(), "column count")?;

    match header.layout {
        Layout::Coordinate => {
            let nnz = parse_usize(it.next(), "entry count")?;
            if rows != cols {
                return Err(Error::Parse(format!(
                    "operator must be square, got {rows}x{cols}"
                )));
            }
            let mut triplets = Vec::with_capacity(nnz);
            for line in body.by_ref().take(nnz) {
                let mut t = line.split_whitespace();
                let i = parse_usize(t.next(), "row index")?;
                let j = parse_usize(t.next(), "column index")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::Parse(format!("index ({i}, {j}) out of range")));
                }
                triplets.push((i - 1, j - 1, parse_f64(t.next())?));
            }
            if triplets.len() != nnz {
                return Err(Error::Parse(format!(
                    "expected {nnz} entries, found {}",
                    triplets.len()
                )));
            }
            match header.symmetry {
                Symmetry::Symmetric => {
                    if triplets.iter().any(|&(i, j, _)| j > i) {
                        return Err(Error::Parse(
                            "symmetric file has an upper-triangle entry".into(),
                        ));
                    }
                    Ok(Parsed::Sparse(SparseSym::from_triplets(rows, triplets)?))
                }
                Symmetry::General => {
                    let mut m = DMatrix::zeros(rows, cols);
                    for (i, j, a) in triplets {
                        m[(i, j)] += a;
                    }
                    Ok(Parsed::Dense(m))
                }
            }
        }
        Layout::Array => {
            let mut m = DMatrix::zeros(rows, cols);
            match header.symmetry {
                Symmetry::General => {
                    let vals: Vec<f64> = body.map(|l| parse_f64(Some(l))).collect::<Result<_>>()?;
                    if vals.len() != rows * cols {
                        return Err(Error::Parse(format!(
                            "expected {} array entries, found {}",
                            rows * cols,
                            vals.len()
                        )));
                    }
                    m.copy_from_slice(&vals);
                }
                Symmetry::Symmetric => {
                    if rows != cols {
                        return Err(Error::Parse("symmetric array must be square".into()));
                    }
                    let mut body = body;
                    for j in 0..cols {
                        for i in j..rows {
                            let a = parse_f64(body.next())?;
                            m[(i, j)] = a;
                            m[(j, i)] = a;
                        }
                    }
                }
            }
            Ok(Parsed::Dense(m))
        }
    }
}

/// Reads a symmetric operator. Coordinate files become sparse operators; array files become
/// dense ones and must be symmetric.
pub fn parse_operator(text: &str) -> Result<SymmetricOperator> {
    match parse_mtx(text)? {
        Parsed::Sparse(s) => Ok(SymmetricOperator::sparse(s)),
        Parsed::Dense(m) => SymmetricOperator::dense(m),
    }
}

pub fn parse_dense(text: &str) -> Result<DMatrix<f64>> {
    match parse_mtx(text)? {
        Parsed::Sparse(s) => Ok(s.to_dense()),
        Parsed::Dense(m) => Ok(m),
    }
}

pub fn read_operator(path: &Path) -> Result<SymmetricOperator> {
    parse_operator(&fs::read_to_string(path)?)
}

pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    parse_dense(&fs::read_to_string(path)?)
}

pub fn save_operator(path: &Path, op: &SymmetricOperator) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_operator_mtx(&mut w, op)?;
    w.flush()?;
    Ok(())
}

pub fn save_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_dense_mtx(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Spectrum CSV with columns `index,eigenvalue` (1-based index, descending values).
pub fn write_spectrum_csv<W: Write>(w: W, values: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "eigenvalue"])?;
    for (i, v) in values.iter().enumerate() {
        out.write_record([(i + 1).to_string(), fmt_f64(*v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_spectrum_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "eigenvalue")
        .ok_or_else(|| Error::Parse("spectrum CSV has no eigenvalue column".into()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(parse_f64(rec.get(col))?);
    }
    Ok(out)
}

pub fn save_spectrum(path: &Path, values: &[f64]) -> Result<()> {
    write_spectrum_csv(fs::File::create(path)?, values)
}

/// Git blob hash: SHA-256 of `"blob <len>\0" + content`, lowercase hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.0,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn sparse_operator_round_trip() {
        let s =
            SparseSym::from_triplets(3, [(0, 0, 2.0), (0, 2, -0.1), (1, 1, 1.0 / 3.0)]).unwrap();
        let op = SymmetricOperator::sparse(s);
        let mut buf = Vec::new();
        write_operator_mtx(&mut buf, &op).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n"));
        assert!(text.contains("\n3 1 "));
        assert_eq!(parse_operator(&text).unwrap(), op);
    }

    #[test]
    fn shifted_sparse_written_sparse() {
        let s = SparseSym::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        let op = SymmetricOperator::sparse(s).shifted(0.5);
        let mut buf = Vec::new();
        write_operator_mtx(&mut buf, &op).unwrap();
        let back = parse_operator(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.to_dense(), op.to_dense());
    }

    #[test]
    fn dense_round_trip_is_column_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 0.1]);
        let mut buf = Vec::new();
        write_dense_mtx(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2 3");
        assert_eq!(lines[3].parse::<f64>().unwrap(), 4.0);
        assert_eq!(parse_dense(&text).unwrap(), m);
    }

    #[test]
    fn symmetric_array_and_comments() {
        let text = "%%MatrixMarket matrix array real symmetric\n% note\n2 2\n1\n2\n3\n";
        let op = parse_operator(text).unwrap();
        assert_eq!(
            op.to_dense(),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0])
        );
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_operator("hello").is_err());
        assert!(parse_operator(
            "%%MatrixMarket matrix coordinate complex symmetric\n1 1 1\n1 1 1\n"
        )
        .is_err());
        assert!(
            parse_operator("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1\n")
                .is_err()
        );
        assert!(
            parse_operator("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n")
                .is_err()
        );
        assert!(
            parse_operator("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n")
                .is_err()
        );
        assert!(parse_dense("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n").is_err());
        assert!(
            parse_operator("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n").is_err()
        );
    }

    #[test]
    fn spectrum_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let vals = [3.0, 2.0 / 3.0, -1e-17];
        save_spectrum(&p, &vals).unwrap();
        assert_eq!(read_spectrum_csv(&p).unwrap(), vals);
        assert!(fs::read_to_string(&p)
            .unwrap()
            .starts_with("index,eigenvalue\n1,"));
    }

    #[test]
    fn git_style_hash() {
        // sha256 variant of `git hash-object` for the empty blob
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
    }
}
