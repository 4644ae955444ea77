//! Plain-text interchange format for [`StandardConeProblem`].
//!
//! ```text
//! conic-dump 1
//! vars <n>
//! c <n values>
//! A <rows> <nnz>
//! <row> <col> <value>        (nnz lines, 0-based)
//! b <rows values>
//! G <rows> <nnz>
//! <row> <col> <value>
//! h <rows values>
//! cones <nonneg> <k> <d1> … <dk>
//! lower <n values>            (inf / -inf allowed)
//! upper <n values>
//! end
//! ```
//!
//! Numbers are written in shortest round-trip form, so dump followed by
//! restore reproduces the problem bit for bit.

use std::fmt::Write as _;

use super::{ConeError, SparseMatrix, StandardConeProblem};

pub const DUMP_VERSION: u32 = 1;
const MAGIC: &str = "conic-dump";

pub fn dump_problem(p: &StandardConeProblem) -> String {
    let mut out = String::new();
    let vec_line = |out: &mut String, tag: &str, v: &[f64]| {
        out.push_str(tag);
        for x in v {
            let _ = write!(out, " {x:?}");
        }
        out.push('\n');
    };
    let mat = |out: &mut String, tag: &str, m: &SparseMatrix| {
        let _ = writeln!(out, "{tag} {} {}", m.nrows, m.nnz());
        for (i, j, v) in m.triplets() {
            let _ = writeln!(out, "{i} {j} {v:?}");
        }
    };
    let _ = writeln!(out, "{MAGIC} {DUMP_VERSION}");
    let _ = writeln!(out, "vars {}", p.num_vars());
    vec_line(&mut out, "c", &p.c);
    mat(&mut out, "A", &p.a);
    vec_line(&mut out, "b", &p.b);
    mat(&mut out, "G", &p.g);
    vec_line(&mut out, "h", &p.h);
    let _ = write!(out, "cones {} {}", p.nonneg, p.soc.len());
    for d in &p.soc {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    vec_line(&mut out, "lower", &p.lower);
    vec_line(&mut out, "upper", &p.upper);
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, expect: &str) -> Result<(usize, Vec<&'a str>), ConeError> {
        loop {
            let (no, line) = self
                .it
                .next()
                .ok_or_else(|| ConeError::Dump(format!("unexpected end of input, expected '{expect}'")))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok((no + 1, t.split_whitespace().collect()));
        }
    }

    fn tagged(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>), ConeError> {
        let (no, words) = self.next(tag)?;
        if words[0] != tag {
            return Err(ConeError::Dump(format!("line {no}: expected '{tag}', found '{}'", words[0])));
        }
        Ok((no, words[1..].to_vec()))
    }
}

fn num<T: std::str::FromStr>(no: usize, w: &str) -> Result<T, ConeError> {
    w.parse()
        .map_err(|_| ConeError::Dump(format!("line {no}: cannot parse '{w}'")))
}

fn values(no: usize, words: &[&str], len: usize, what: &str) -> Result<Vec<f64>, ConeError> {
    if words.len() != len {
        return Err(ConeError::Dump(format!("line {no}: {what} has {} values, expected {len}", words.len())));
    }
    words.iter().map(|w| num(no, w)).collect()
}

fn matrix(lines: &mut Lines<'_>, tag: &str, ncols: usize) -> Result<SparseMatrix, ConeError> {
    let (no, head) = lines.tagged(tag)?;
    if head.len() != 2 {
        return Err(ConeError::Dump(format!("line {no}: '{tag}' needs rows and nnz")));
    }
    let rows: usize = num(no, head[0])?;
    let nnz: usize = num(no, head[1])?;
    let mut trip = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (no, w) = lines.next("matrix entry")?;
        if w.len() != 3 {
            return Err(ConeError::Dump(format!("line {no}: matrix entry needs 'row col value'")));
        }
        let (i, j, v): (usize, usize, f64) = (num(no, w[0])?, num(no, w[1])?, num(no, w[2])?);
        if i >= rows || j >= ncols {
            return Err(ConeError::Dump(format!("line {no}: entry ({i}, {j}) out of range")));
        }
        trip.push((i, j, v));
    }
    Ok(SparseMatrix::from_triplets(rows, ncols, &trip))
}

pub fn restore_problem(text: &str) -> Result<StandardConeProblem, ConeError> {
    let mut lines = Lines { it: text.lines().enumerate() };
    let (no, head) = lines.tagged(MAGIC)?;
    let version: u32 = num(no, head.first().copied().unwrap_or(""))?;
    if version != DUMP_VERSION {
        return Err(ConeError::Dump(format!("unsupported dump version {version}")));
    }
    let (no, w) = lines.tagged("vars")?;
    let n: usize = num(no, w.first().copied().unwrap_or(""))?;
    let (no, w) = lines.tagged("c")?;
    let c = values(no, &w, n, "c")?;
    let a = matrix(&mut lines, "A", n)?;
    let (no, w) = lines.tagged("b")?;
    let b = values(no, &w, a.nrows, "b")?;
    let g = matrix(&mut lines, "G", n)?;
    let (no, w) = lines.tagged("h")?;
    let h = values(no, &w, g.nrows, "h")?;
    let (no, w) = lines.tagged("cones")?;
    if w.len() < 2 {
        return Err(ConeError::Dump(format!("line {no}: 'cones' needs nonneg and count")));
    }
    let nonneg: usize = num(no, w[0])?;
    let k: usize = num(no, w[1])?;
    if w.len() != 2 + k {
        return Err(ConeError::Dump(format!("line {no}: expected {k} cone dimensions")));
    }
    let soc = w[2..].iter().map(|d| num(no, d)).collect::<Result<Vec<usize>, _>>()?;
    let (no, w) = lines.tagged("lower")?;
    let lower = values(no, &w, n, "lower")?;
    let (no, w) = lines.tagged("upper")?;
    let upper = values(no, &w, n, "upper")?;
    lines.tagged("end")?;
    let p = StandardConeProblem { c, a, b, g, h, nonneg, soc, lower, upper };
    p.check()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut p = StandardConeProblem::new(vec![0.1, -1.0 / 3.0, 7e-300]);
        p.a = SparseMatrix::from_triplets(1, 3, &[(0, 0, 1.0), (0, 2, std::f64::consts::PI)]);
        p.b = vec![2.5];
        p.g = SparseMatrix::from_triplets(4, 3, &[(0, 1, -1.0), (1, 2, -1.0), (2, 0, 0.3), (3, 1, 1e-17)]);
        p.h = vec![0.0, 1.0, 2.0, 3.0];
        p.nonneg = 1;
        p.soc = vec![3];
        p.lower[0] = -2.0;
        p.upper[1] = 4.0;
        let text = dump_problem(&p);
        assert_eq!(restore_problem(&text).unwrap(), p);
    }

    #[test]
    fn wrong_version_rejected() {
        let p = StandardConeProblem::new(vec![1.0]);
        let text = dump_problem(&p).replacen("conic-dump 1", "conic-dump 9", 1);
        assert!(matches!(restore_problem(&text), Err(ConeError::Dump(_))));
    }

    #[test]
    fn truncated_input_rejected() {
        let p = StandardConeProblem::new(vec![1.0, 2.0]);
        let text = dump_problem(&p);
        let cut = &text[..text.len() - 5];
        assert!(restore_problem(cut).is_err());
    }
}
