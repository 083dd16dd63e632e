//! MatrixMarket exchange format (`.mtx`), real-valued subset.
//!
//! Supported: `coordinate` and `array` layouts; `real`, `integer` and
//! (coordinate only) `pattern` fields; `general`, `symmetric` and
//! `skew-symmetric` storage. Coordinate entries with repeated `(i, j)` are
//! summed.

use std::io::{BufRead, Write};

use super::IoError;
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub layout: Layout,
    pub field: Field,
    pub symmetry: Symmetry,
}

fn parse_err(line: usize, reason: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_header(line: &str) -> Result<Header, IoError> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(parse_err(1, "first line must start with %%MatrixMarket"));
    }
    if tokens.len() != 5 {
        return Err(parse_err(
            1,
            "header needs object, format, field and symmetry",
        ));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(1, format!("unsupported object {:?}", tokens[1])));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(1, format!("unknown format {other:?}"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        "complex" => return Err(IoError::UnsupportedField("complex".into())),
        other => return Err(parse_err(1, format!("unknown field {other:?}"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        "hermitian" => return Err(IoError::UnsupportedField("hermitian".into())),
        other => return Err(parse_err(1, format!("unknown symmetry {other:?}"))),
    };
    if layout == Layout::Array && field == Field::Pattern {
        return Err(parse_err(1, "pattern field requires coordinate format"));
    }
    Ok(Header {
        layout,
        field,
        symmetry,
    })
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize, IoError> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what}")))
}

fn parse_value(tok: Option<&str>, line: usize, field: Field) -> Result<f64, IoError> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
    match field {
        Field::Integer => tok
            .parse::<i64>()
            .map(|v| v as f64)
            .map_err(|_| parse_err(line, format!("invalid integer {tok:?}"))),
        _ => tok
            .parse::<f64>()
            .map_err(|_| parse_err(line, format!("invalid number {tok:?}"))),
    }
}

/// Reads a matrix and returns it in CSR form with its header.
pub fn parse_matrix_market_with_header<R: BufRead>(
    reader: R,
) -> Result<(Header, CsrMatrix), IoError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, l)) => parse_header(&l?)?,
        None => return Err(parse_err(1, "empty input")),
    };

    // data lines: skip comments and blanks
    let mut data = lines.filter_map(|(n, l)| match l {
        Ok(l) => {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('%')).then(|| Ok((n, t.to_string())))
        }
        Err(e) => Some(Err(e)),
    });

    let (size_line, size) = data
        .next()
        .ok_or_else(|| parse_err(0, "missing size line"))??;
    let mut tok = size.split_whitespace();
    let rows = parse_usize(tok.next(), size_line, "row count")?;
    let cols = parse_usize(tok.next(), size_line, "column count")?;
    let declared = match header.layout {
        Layout::Coordinate => Some(parse_usize(tok.next(), size_line, "entry count")?),
        Layout::Array => None,
    };
    if tok.next().is_some() {
        return Err(parse_err(size_line, "trailing tokens on size line"));
    }
    if header.symmetry != Symmetry::General && rows != cols {
        return Err(parse_err(
            size_line,
            "symmetric storage requires a square matrix",
        ));
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut push = |i: usize, j: usize, v: f64| {
        triplets.push((i, j, v));
        if i != j {
            match header.symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => triplets.push((j, i, v)),
                Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
            }
        }
    };

    let mut last_line = size_line;
    match header.layout {
        Layout::Coordinate => {
            let nnz = declared.expect("coordinate has a count");
            let mut seen = 0;
            for item in data {
                let (n, l) = item?;
                last_line = n;
                if seen == nnz {
                    return Err(parse_err(
                        n,
                        format!("more than the declared {nnz} entries"),
                    ));
                }
                let mut tok = l.split_whitespace();
                let i = parse_usize(tok.next(), n, "row index")?;
                let j = parse_usize(tok.next(), n, "column index")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(n, format!("index ({i}, {j}) out of range")));
                }
                if header.symmetry != Symmetry::General && j > i {
                    return Err(parse_err(n, "symmetric storage expects the lower triangle"));
                }
                let v = match header.field {
                    Field::Pattern => 1.0,
                    f => parse_value(tok.next(), n, f)?,
                };
                if tok.next().is_some() {
                    return Err(parse_err(n, "trailing tokens"));
                }
                push(i - 1, j - 1, v);
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(
                    last_line,
                    format!("expected {nnz} entries, found {seen}"),
                ));
            }
        }
        Layout::Array => {
            // column-major; symmetric variants store the lower triangle only
            let positions: Vec<(usize, usize)> = (0..cols)
                .flat_map(|j| {
                    let start = match header.symmetry {
                        Symmetry::General => 0,
                        Symmetry::Symmetric => j,
                        Symmetry::SkewSymmetric => j + 1,
                    };
                    (start..rows).map(move |i| (i, j))
                })
                .collect();
            let mut pos = positions.iter();
            for item in data {
                let (n, l) = item?;
                last_line = n;
                for t in l.split_whitespace() {
                    let &(i, j) = pos
                        .next()
                        .ok_or_else(|| parse_err(n, "more values than the matrix holds"))?;
                    let v = parse_value(Some(t), n, header.field)?;
                    if v != 0.0 {
                        push(i, j, v);
                    }
                }
            }
            if pos.next().is_some() {
                return Err(parse_err(last_line, "fewer values than the matrix holds"));
            }
        }
    }
    let csr = CsrMatrix::from_triplets(rows, cols, &triplets)
        .map_err(|e| parse_err(last_line, e.to_string()))?;
    Ok((header, csr))
}

/// Reads a real MatrixMarket matrix into CSR with duplicates summed and
/// symmetric storage expanded.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix, IoError> {
    parse_matrix_market_with_header(reader).map(|(_, m)| m)
}

/// Writes `coordinate real general`, 1-based, one stored entry per line.
/// Values use the shortest representation that reads back exactly.
pub fn write_matrix_market<W: Write>(matrix: &CsrMatrix, mut w: W) -> Result<(), IoError> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", matrix.rows(), matrix.cols(), matrix.nnz())?;
    let (indptr, indices, values) = (matrix.indptr(), matrix.indices(), matrix.values());
    for i in 0..matrix.rows() {
        for p in indptr[i]..indptr[i + 1] {
            writeln!(w, "{} {} {:e}", i + 1, indices[p] + 1, values[p])?;
        }
    }
    Ok(())
}

/// Reads a single-column matrix (array or coordinate) as a dense vector.
pub fn parse_vector<R: BufRead>(reader: R) -> Result<Vec<f64>, IoError> {
    let m = parse_matrix_market(reader)?;
    if m.cols() != 1 {
        return Err(parse_err(
            2,
            format!("expected one column, found {}", m.cols()),
        ));
    }
    let dense = m.to_dense();
    Ok((0..m.rows()).map(|i| dense.get(i, 0)).collect())
}

/// Writes a dense vector as an `array real general` column.
pub fn write_vector<W: Write>(v: &[f64], mut w: W) -> Result<(), IoError> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    Ok(())
}
