//! Sparse SDPA (`.dat-s`) export and a matching parser.
//!
//! SDPA solves `min cᵀx` subject to `Σ F_k x_k - F_0 ⪰ 0` with free `x`.
//! Each decision variable `k` becomes SDPA variable `k + 1`. A PSD block
//! variable `(i, j)` contributes a unit entry to its own block, so the block
//! matrix equals `M`. Each equality `aᵀx + c0 = 0` becomes the diagonal pair
//! `aᵀx + c0 ≥ 0`, `-aᵀx - c0 ≥ 0` in one trailing LP block. Maximizing
//! `f` is written as minimizing `-f` (the constant part of `f` is dropped).

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::SdpProblem;

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed SDPA text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One nonzero `(matno, blkno, i, j, value)` with 1-based indices, `i ≤ j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpaEntry {
    pub mat: usize,
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Parsed or generated SDPA problem data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpaData {
    /// Positive sizes are symmetric blocks, negative sizes diagonal (LP) blocks.
    pub block_struct: Vec<i64>,
    pub c: Vec<f64>,
    pub entries: Vec<SdpaEntry>,
}

impl SdpaData {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn from_problem(problem: &SdpProblem) -> Self {
        let n = problem.num_vars();
        let mut c = vec![0.0; n];
        if let Some(obj) = problem.objective() {
            for (v, coef) in obj.terms() {
                c[v.0 as usize] = -coef.to_f64();
            }
        }
        let mut block_struct = Vec::new();
        let mut entries = Vec::new();
        for (b, block) in problem.blocks().iter().enumerate() {
            block_struct.push(block.size as i64);
            for (k, v) in block.vars().enumerate() {
                let (i, j) = block.position(k);
                entries.push(SdpaEntry { mat: v.0 as usize + 1, block: b + 1, i: i + 1, j: j + 1, value: 1.0 });
            }
        }
        let eqs = problem.equalities();
        if !eqs.is_empty() {
            let lp = block_struct.len() + 1;
            block_struct.push(-2 * eqs.len() as i64);
            for (r, e) in eqs.iter().enumerate() {
                for (sign, slot) in [(1.0, 2 * r + 1), (-1.0, 2 * r + 2)] {
                    let c0 = e.constant_part().to_f64();
                    if c0 != 0.0 {
                        entries.push(SdpaEntry { mat: 0, block: lp, i: slot, j: slot, value: -sign * c0 });
                    }
                    for (v, coef) in e.terms() {
                        entries.push(SdpaEntry {
                            mat: v.0 as usize + 1,
                            block: lp,
                            i: slot,
                            j: slot,
                            value: sign * coef.to_f64(),
                        });
                    }
                }
            }
        }
        entries.sort_by_key(|e| (e.mat, e.block, e.i, e.j));
        Self { block_struct, c, entries }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\"exported semidefinite feasibility program");
        let _ = writeln!(out, "{}", self.c.len());
        let _ = writeln!(out, "{}", self.block_struct.len());
        let _ = writeln!(out, "{}", join(self.block_struct.iter()));
        let _ = writeln!(out, "{}", join(self.c.iter()));
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {} {}", e.mat, e.block, e.i, e.j, e.value);
        }
        out
    }
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// SDPA text for `problem`. Floats use shortest round-trip formatting.
pub fn write_sdpa(problem: &SdpProblem) -> String {
    SdpaData::from_problem(problem).to_text()
}

pub fn export_sdpa(problem: &SdpProblem, path: &Path) -> Result<(), SdpaError> {
    std::fs::write(path, write_sdpa(problem))?;
    Ok(())
}

/// Parse sparse SDPA text. Comment lines start with `"` or `*`; commas and
/// braces in the header are treated as whitespace.
pub fn parse_sdpa(text: &str) -> Result<SdpaData, SdpaError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('"') && !t.starts_with('*')
        })
        .map(|(k, l)| (k + 1, l.replace([',', '{', '}', '(', ')'], " ")));
    let err = |line: usize, reason: &str| SdpaError::Parse { line, reason: reason.to_string() };
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

    let (ln, l) = next("variable count")?;
    let m: usize = first_token(&l).ok_or_else(|| err(ln, "bad variable count"))?;
    let (ln, l) = next("block count")?;
    let nb: usize = first_token(&l).ok_or_else(|| err(ln, "bad block count"))?;
    // Blank lines are skipped, so empty structure and objective lines
    // (no blocks, no variables) are simply absent.
    let block_struct: Vec<i64> = if nb == 0 {
        Vec::new()
    } else {
        let (ln, l) = next("block structure")?;
        let bs: Vec<i64> = tokens(&l).ok_or_else(|| err(ln, "bad block structure"))?;
        if bs.len() < nb || bs[..nb].iter().any(|&s| s == 0) {
            return Err(err(ln, "block structure does not match block count"));
        }
        bs[..nb].to_vec()
    };
    let c: Vec<f64> = if m == 0 {
        Vec::new()
    } else {
        let (ln, l) = next("objective")?;
        let c: Vec<f64> = tokens(&l).ok_or_else(|| err(ln, "bad objective"))?;
        if c.len() < m {
            return Err(err(ln, "objective too short"));
        }
        c[..m].to_vec()
    };
    let mut entries = Vec::new();
    for (ln, l) in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < 5 {
            return Err(err(ln, "entry needs five fields"));
        }
        let idx = |k: usize| t[k].parse::<usize>().map_err(|_| err(ln, "bad index"));
        let e = SdpaEntry {
            mat: idx(0)?,
            block: idx(1)?,
            i: idx(2)?,
            j: idx(3)?,
            value: t[4].parse().map_err(|_| err(ln, "bad value"))?,
        };
        if e.mat > m || e.block == 0 || e.block > nb {
            return Err(err(ln, "index out of range"));
        }
        let size = block_struct[e.block - 1].unsigned_abs() as usize;
        if e.i == 0 || e.j == 0 || e.i > size || e.j > size {
            return Err(err(ln, "entry outside its block"));
        }
        entries.push(e);
    }
    Ok(SdpaData { block_struct, c, entries })
}

fn first_token<T: std::str::FromStr>(line: &str) -> Option<T> {
    line.split_whitespace().next()?.parse().ok()
}

fn tokens<T: std::str::FromStr>(line: &str) -> Option<Vec<T>> {
    line.split_whitespace().map(|t| t.parse().ok()).collect()
}
