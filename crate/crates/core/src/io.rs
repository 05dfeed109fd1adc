//! Matrix Market, coordinate and CSV files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::{CaseLabel, ProblemInstance};
use crate::sparse::SparseMatrix;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a coordinate-format real Matrix Market file. Symmetric files store
/// one triangle and are expanded; general files must hold symmetric values.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format '{}'", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "expected 'rows cols nnz'"));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()));
                let (r, c, nnz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                if r != c {
                    return Err(Error::DimensionMismatch { expected: r, found: c });
                }
                size = Some((r, c, nnz));
                triplets.reserve(if symmetric { 2 * nnz } else { nnz });
            }
            Some((r, c, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "expected 'row col value'"));
                }
                let i: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) out of range")));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (r, c, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(0, format!("expected {nnz} entries, found {stored}")));
    }
    let m = SparseMatrix::from_triplets(r, c, triplets);
    if !m.is_symmetric(1e-12) {
        let (i, j) = first_asymmetry(&m);
        return Err(Error::NotSymmetric(i, j));
    }
    Ok(m)
}

fn first_asymmetry(m: &SparseMatrix) -> (usize, usize) {
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if m.get(j, i) != v {
                return (i, j);
            }
        }
    }
    (0, 0)
}

/// Writes `matrix` in coordinate format. Symmetric matrices store their
/// lower triangle; values use shortest round-trip formatting.
pub fn write_matrix_market(matrix: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let symmetric = matrix.nrows() == matrix.ncols() && matrix.symmetric();
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    let entries: Vec<(usize, usize, f64)> = (0..matrix.nrows())
        .flat_map(|i| {
            let (cols, vals) = matrix.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
        .filter(|&(i, j, _)| !symmetric || j <= i)
        .collect();
    writeln!(w, "{} {} {}", matrix.nrows(), matrix.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `i x y` lines (1-based `i`). Every index `1..=n` must appear once.
pub fn read_coords(path: impl AsRef<Path>, n: usize) -> Result<Vec<[f64; 2]>> {
    let reader = BufReader::new(File::open(path)?);
    let mut coords: Vec<Option<[f64; 2]>> = vec![None; n];
    let mut count = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let lineno = lineno + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(lineno, "expected 'index x y'"));
        }
        let i: usize = f[0].parse().map_err(|_| parse_err(lineno, "bad index"))?;
        let x: f64 = f[1].parse().map_err(|_| parse_err(lineno, "bad x"))?;
        let y: f64 = f[2].parse().map_err(|_| parse_err(lineno, "bad y"))?;
        if i == 0 || i > n {
            return Err(Error::DimensionMismatch { expected: n, found: i });
        }
        if coords[i - 1].replace([x, y]).is_some() {
            return Err(parse_err(lineno, format!("duplicate index {i}")));
        }
        count += 1;
    }
    if count != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: count,
        });
    }
    Ok(coords.into_iter().map(Option::unwrap).collect())
}

pub fn write_coords(coords: &[[f64; 2]], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, c) in coords.iter().enumerate() {
        writeln!(w, "{} {:e} {:e}", i + 1, c[0], c[1])?;
    }
    w.flush()?;
    Ok(())
}

/// Loads an external problem from a Matrix Market file and an optional
/// coordinates file.
pub fn load_matrix_market(
    path: impl AsRef<Path>,
    coords_path: Option<&Path>,
) -> Result<ProblemInstance> {
    let matrix = read_matrix_market(path)?;
    let coords = coords_path.map(|p| read_coords(p, matrix.n())).transpose()?;
    Ok(ProblemInstance {
        matrix,
        coords,
        label: CaseLabel::External,
    })
}

pub fn save_matrix_market(problem: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_market(&problem.matrix, path)
}

/// Minimal CSV table: a header and rows of preformatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Formats a float for CSV output (shortest round-trip representation).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() && v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e9) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_fd_square, DiffusionCoefficients};

    #[test]
    fn identity_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eye.mtx");
        std::fs::write(&path, "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 1.0\n2 2 1.0\n").unwrap();
        let p = load_matrix_market(&path, None).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.matrix.diagonal(), vec![1.0, 1.0]);
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        let c = DiffusionCoefficients::new(1.0, 0.3, 0.1).unwrap();
        let p = generate_fd_square(3, c).unwrap();
        save_matrix_market(&p, &path).unwrap();
        let q = load_matrix_market(&path, None).unwrap();
        assert_eq!(p.matrix.row_ptr(), q.matrix.row_ptr());
        assert_eq!(p.matrix.col_idx(), q.matrix.col_idx());
        let bits = |m: &SparseMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p.matrix), bits(&q.matrix));
    }

    #[test]
    fn coords_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mtx = dir.path().join("a.mtx");
        let xy = dir.path().join("a.xy");
        let p = generate_fd_square(3, DiffusionCoefficients::ISO).unwrap();
        save_matrix_market(&p, &mtx).unwrap();
        let mut f = File::create(&xy).unwrap();
        for i in 1..9 {
            writeln!(f, "{i} 0.5 0.5").unwrap();
        }
        drop(f);
        assert!(matches!(
            load_matrix_market(&mtx, Some(&xy)),
            Err(Error::DimensionMismatch { expected: 9, found: 8 })
        ));
        write_coords(p.coords.as_ref().unwrap(), &xy).unwrap();
        let q = load_matrix_market(&mtx, Some(&xy)).unwrap();
        assert_eq!(q.coords, p.coords);
    }

    #[test]
    fn rejects_nonsymmetric_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.mtx");
        std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n1 2 2\n2 2 1\n").unwrap();
        assert!(matches!(read_matrix_market(&path), Err(Error::NotSymmetric(0, 1))));
        std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1\n").unwrap();
        assert!(matches!(read_matrix_market(&path), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&path, "hello\n").unwrap();
        assert!(matches!(read_matrix_market(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_render() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        assert_eq!(t.render(), "a,b\n1,0.5\n");
        assert_eq!(fmt_f64(1e-8), "1e-8");
    }
}
