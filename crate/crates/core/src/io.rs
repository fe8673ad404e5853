//! Matrix Market (coordinate, real, symmetric) and plain vector files.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::SparseSym;

/// Lower triangle, 1-based, values with 17 significant digits.
pub fn write_matrix_market(a: &SparseSym, mut w: impl Write) -> Result<()> {
    let lower: Vec<(usize, usize, f64)> = a.entries().filter(|&(i, j, _)| j <= i).collect();
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.dim(), a.dim(), lower.len())?;
    for (i, j, v) in lower {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Read a square coordinate matrix. `symmetric` files mirror their off-diagonal
/// entries; `general` files must already be symmetric.
pub fn read_matrix_market(r: impl BufRead) -> Result<SparseSym> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?.to_ascii_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(1, "only coordinate format is supported"));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field type '{}'", fields[3])));
    }
    let symmetric = match fields[4] {
        "symmetric" => true,
        "general" => false,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(parse_err(lineno, "expected 'rows cols entries'"));
                }
                let nums: Vec<usize> = parts
                    .iter()
                    .map(|p| p.parse().map_err(|_| parse_err(lineno, format!("bad integer '{p}'"))))
                    .collect::<Result<_>>()?;
                if nums[0] != nums[1] {
                    return Err(parse_err(lineno, "matrix must be square"));
                }
                size = Some((nums[0], nums[2]));
                triplets.reserve(2 * nums[2]);
            }
            Some((n, _)) => {
                if parts.len() != 3 {
                    return Err(parse_err(lineno, "expected 'row col value'"));
                }
                let idx = |p: &str| -> Result<usize> {
                    let v: usize = p.parse().map_err(|_| parse_err(lineno, format!("bad index '{p}'")))?;
                    if v == 0 || v > n {
                        return Err(parse_err(lineno, format!("index {v} outside 1..={n}")));
                    }
                    Ok(v - 1)
                };
                let (i, j) = (idx(parts[0])?, idx(parts[1])?);
                let v: f64 = parts[2].parse().map_err(|_| parse_err(lineno, format!("bad value '{}'", parts[2])))?;
                if symmetric && j > i {
                    return Err(parse_err(lineno, "symmetric files store the lower triangle only"));
                }
                triplets.push((i, j, v));
                if symmetric && i != j {
                    triplets.push((j, i, v));
                }
            }
        }
    }
    let (n, count) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|&&(i, j, _)| j <= i).count()
    } else {
        triplets.len()
    };
    if stored != count {
        return Err(parse_err(0, format!("expected {count} entries, found {stored}")));
    }
    if !symmetric {
        let mut map = std::collections::BTreeMap::new();
        for &(i, j, v) in &triplets {
            *map.entry((i, j)).or_insert(0.0) += v;
        }
        for (&(i, j), &v) in &map {
            if map.get(&(j, i)).copied().unwrap_or(0.0) != v {
                return Err(parse_err(0, format!("general matrix is not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    SparseSym::from_triplets(n, &triplets)
}

/// One value per line.
pub fn write_vector(x: &[f64], mut w: impl Write) -> Result<()> {
    for v in x {
        writeln!(w, "{v:.17e}")?;
    }
    Ok(())
}

/// One value per line; blank lines and lines starting with `%` or `#` are skipped.
pub fn read_vector(r: impl BufRead) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        out.push(t.parse().map_err(|_| parse_err(k + 1, format!("bad value '{t}'")))?);
    }
    Ok(out)
}
