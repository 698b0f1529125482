//! Plain-text matrix file format.
//!
//! Header line `dim dA dB`, followed by `dim^2` lines `row col re im`
//! (0-based indices); the writer emits 17 significant digits so that a
//! write/read round trip is bit-faithful for f64.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Result, SepmapError};
use crate::matrix::{CMatrix, HermitianMatrix};

/// A Hermitian matrix tagged with its bipartite factorization.
#[derive(Debug, Clone)]
pub struct MatrixRecord {
    pub matrix: HermitianMatrix,
    pub d_a: usize,
    pub d_b: usize,
}

pub fn write_matrix(w: &mut impl Write, m: &HermitianMatrix, d_a: usize, d_b: usize) -> Result<()> {
    if d_a * d_b != m.dim() {
        return Err(SepmapError::DimensionMismatch {
            context: format!("header dims {}*{} != matrix dim {}", d_a, d_b, m.dim()),
        });
    }
    writeln!(w, "{} {} {}", m.dim(), d_a, d_b)?;
    let data = m.as_matrix();
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            let z = data[(i, j)];
            writeln!(w, "{} {} {:.16e} {:.16e}", i, j, z.re, z.im)?;
        }
    }
    Ok(())
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: &HermitianMatrix, d_a: usize, d_b: usize) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix(&mut f, m, d_a, d_b)
}

pub fn read_matrix(r: impl BufRead) -> Result<MatrixRecord> {
    let mut lines = r.lines().enumerate();
    let (dim, d_a, d_b) = loop {
        let (lineno, line) = lines.next().ok_or(SepmapError::Parse {
            line: 1,
            reason: "empty file".to_string(),
        })?;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(SepmapError::Parse {
                line: lineno + 1,
                reason: format!("expected header `dim dA dB`, got `{trimmed}`"),
            });
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| SepmapError::Parse {
                line: lineno + 1,
                reason: format!("invalid integer `{s}` in header"),
            })
        };
        break (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
    };
    if dim == 0 || d_a * d_b != dim {
        return Err(SepmapError::Parse {
            line: 1,
            reason: format!("header dims inconsistent: dim={dim}, dA={d_a}, dB={d_b}"),
        });
    }

    let mut data = CMatrix::zeros(dim, dim);
    let mut seen = vec![false; dim * dim];
    let mut count = 0usize;
    for (lineno, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(SepmapError::Parse {
                line: lineno + 1,
                reason: format!("expected `row col re im`, got `{trimmed}`"),
            });
        }
        let row: usize = fields[0].parse().map_err(|_| SepmapError::Parse {
            line: lineno + 1,
            reason: format!("invalid row index `{}`", fields[0]),
        })?;
        let col: usize = fields[1].parse().map_err(|_| SepmapError::Parse {
            line: lineno + 1,
            reason: format!("invalid col index `{}`", fields[1]),
        })?;
        if row >= dim || col >= dim {
            return Err(SepmapError::Parse {
                line: lineno + 1,
                reason: format!("index ({row},{col}) out of range for dim {dim}"),
            });
        }
        let re: f64 = fields[2].parse().map_err(|_| SepmapError::Parse {
            line: lineno + 1,
            reason: format!("invalid real part `{}`", fields[2]),
        })?;
        let im: f64 = fields[3].parse().map_err(|_| SepmapError::Parse {
            line: lineno + 1,
            reason: format!("invalid imaginary part `{}`", fields[3]),
        })?;
        let flat = row * dim + col;
        if seen[flat] {
            return Err(SepmapError::Parse {
                line: lineno + 1,
                reason: format!("duplicate entry for ({row},{col})"),
            });
        }
        seen[flat] = true;
        count += 1;
        data[(row, col)] = Complex64::new(re, im);
    }
    if count != dim * dim {
        return Err(SepmapError::Parse {
            line: 0,
            reason: format!("expected {} entries, found {count}", dim * dim),
        });
    }
    Ok(MatrixRecord {
        matrix: HermitianMatrix::new(data)?,
        d_a,
        d_b,
    })
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<MatrixRecord> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_matrix(f)
}
