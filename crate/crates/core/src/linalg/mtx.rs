//! Matrix Market coordinate I/O for [`SparseMatrix`] and plain
//! one-value-per-line vector files.

use std::fs;
use std::path::Path;

use super::{LinalgError, SparseMatrix};

/// Parse a Matrix Market `coordinate real general` document.
pub fn read_matrix_market_str(text: &str) -> Result<SparseMatrix, LinalgError> {
    let mut lines = text.lines().enumerate();

    let (header_no, header) = lines
        .next()
        .ok_or(LinalgError::Parse { line: 1, msg: "empty file".into() })?;
    let header_lc = header.to_ascii_lowercase();
    let fields: Vec<&str> = header_lc.split_whitespace().collect();
    if fields.len() < 4
        || !fields[0].starts_with("%%matrixmarket")
        || fields[1] != "matrix"
        || fields[2] != "coordinate"
    {
        return Err(LinalgError::Parse {
            line: header_no + 1,
            msg: "expected '%%MatrixMarket matrix coordinate real general' header".into(),
        });
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(LinalgError::Parse {
            line: header_no + 1,
            msg: format!("unsupported value type '{}'", fields[3]),
        });
    }
    if let Some(sym) = fields.get(4) {
        if *sym != "general" {
            return Err(LinalgError::Parse {
                line: header_no + 1,
                msg: format!("unsupported symmetry '{sym}'"),
            });
        }
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let parse_err = |msg: String| LinalgError::Parse { line: no + 1, msg };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(parse_err("expected 'rows cols nnz' size line".into()));
                }
                let rows = toks[0].parse().map_err(|_| parse_err("bad row count".into()))?;
                let cols = toks[1].parse().map_err(|_| parse_err("bad column count".into()))?;
                let nnz = toks[2].parse().map_err(|_| parse_err("bad entry count".into()))?;
                size = Some((rows, cols, nnz));
                entries.reserve(nnz);
            }
            Some((rows, cols, _)) => {
                if toks.len() != 3 {
                    return Err(parse_err("expected 'row col value' entry".into()));
                }
                let r: usize = toks[0].parse().map_err(|_| parse_err("bad row index".into()))?;
                let c: usize = toks[1].parse().map_err(|_| parse_err("bad column index".into()))?;
                let v: f64 = toks[2].parse().map_err(|_| parse_err("bad value".into()))?;
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(parse_err(format!(
                        "index ({r}, {c}) outside 1..={rows} x 1..={cols}"
                    )));
                }
                entries.push((r - 1, c - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or(LinalgError::Parse {
        line: header_no + 2,
        msg: "missing size line".into(),
    })?;
    if entries.len() != nnz {
        return Err(LinalgError::Parse {
            line: header_no + 1,
            msg: format!("declared {nnz} entries, found {}", entries.len()),
        });
    }
    SparseMatrix::new(rows, cols, entries)
}

pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix, LinalgError> {
    let text = fs::read_to_string(path).map_err(|e| LinalgError::Io(e.to_string()))?;
    read_matrix_market_str(&text)
}

pub fn matrix_market_string(matrix: &SparseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!(
        "{} {} {}\n",
        matrix.rows(),
        matrix.cols(),
        matrix.nnz()
    ));
    for &(r, c, v) in matrix.entries() {
        out.push_str(&format!("{} {} {:.17e}\n", r + 1, c + 1, v));
    }
    out
}

pub fn write_matrix_market(matrix: &SparseMatrix, path: &Path) -> Result<(), LinalgError> {
    fs::write(path, matrix_market_string(matrix)).map_err(|e| LinalgError::Io(e.to_string()))
}

/// Parse a dense vector stored one value per line. Blank lines and lines
/// starting with `%` are skipped.
pub fn read_vector_str(text: &str) -> Result<Vec<f64>, LinalgError> {
    let mut values = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| LinalgError::Parse {
            line: no + 1,
            msg: format!("bad number '{line}'"),
        })?;
        values.push(v);
    }
    Ok(values)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, LinalgError> {
    let text = fs::read_to_string(path).map_err(|e| LinalgError::Io(e.to_string()))?;
    read_vector_str(&text)
}

pub fn write_vector(values: &[f64], path: &Path) -> Result<(), LinalgError> {
    let mut out = String::new();
    for v in values {
        out.push_str(&format!("{v:.17e}\n"));
    }
    fs::write(path, out).map_err(|e| LinalgError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_coordinate_format() {
        let text = "%%MatrixMarket matrix coordinate real general\n\
                    % a comment\n\
                    2 3 2\n\
                    1 1 1.5\n\
                    2 3 -2\n";
        let m = read_matrix_market_str(text).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 3);
        assert_eq!(m.entries(), &[(0, 0, 1.5), (1, 2, -2.0)]);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 3\n";
        match read_matrix_market_str(text) {
            Err(LinalgError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(
            read_matrix_market_str(text),
            Err(LinalgError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn vector_roundtrip_through_text() {
        let parsed = read_vector_str("% comment\n1.0\n\n-2.5e0\n").unwrap();
        assert_eq!(parsed, vec![1.0, -2.5]);
    }

    #[test]
    fn matrix_roundtrip_through_file() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.25, -3.0]]).unwrap();
        let dir = std::env::temp_dir().join("pnorm_mtx_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.mtx");
        write_matrix_market(&m, &path).unwrap();
        let back = read_matrix_market(&path).unwrap();
        assert_eq!(m, back);
    }
}
