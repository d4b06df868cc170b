//! Sparse SDPA (`.dat-s`) import and export.
//!
//! SDPA's dual form `max <F0, Y>  s.t. <F_i, Y> = c_i, Y ⪰ 0` carries our
//! problem with `F0 = -C`, `F_i = A_i`, `c = b`. Free scalars are written as
//! `u = u⁺ - u⁻` in a trailing diagonal block of size `2·nf`. On import,
//! every diagonal block of size `s` becomes `s` PSD blocks of size one.

use std::fmt::Write as _;
use std::path::Path;

use super::{LinearForm, SdpError, SdpProblem, SymEntry};

pub fn to_string(problem: &SdpProblem) -> Result<String, SdpError> {
    problem.validate()?;
    let m = problem.constraints.len();
    let nf = problem.free_count;
    let mut out = String::new();
    let w = |e: std::fmt::Error| SdpError::Io(e.to_string());
    writeln!(out, "\"switchsos export: {} constraints, {} PSD blocks, {} free\"", m, problem.blocks.len(), nf).map_err(w)?;
    writeln!(out, "{}", m).map_err(w)?;
    let nblocks = problem.blocks.len() + usize::from(nf > 0);
    writeln!(out, "{}", nblocks).map_err(w)?;
    let mut sizes: Vec<String> = problem.blocks.iter().map(|n| n.to_string()).collect();
    if nf > 0 {
        sizes.push(format!("-{}", 2 * nf));
    }
    writeln!(out, "{}", sizes.join(" ")).map_err(w)?;
    let rhs: Vec<String> = problem.constraints.iter().map(|c| format!("{:e}", c.rhs)).collect();
    writeln!(out, "{}", rhs.join(" ")).map_err(w)?;

    let lp_block = problem.blocks.len() + 1;
    let emit = |out: &mut String, mat: usize, form: &LinearForm, sign: f64| -> Result<(), SdpError> {
        for e in &form.entries {
            if e.value != 0.0 {
                writeln!(out, "{} {} {} {} {:e}", mat, e.block + 1, e.row + 1, e.col + 1, sign * e.value).map_err(w)?;
            }
        }
        for &(k, v) in &form.free {
            if v != 0.0 {
                writeln!(out, "{} {} {} {} {:e}", mat, lp_block, k + 1, k + 1, sign * v).map_err(w)?;
                writeln!(out, "{} {} {} {} {:e}", mat, lp_block, nf + k + 1, nf + k + 1, -sign * v).map_err(w)?;
            }
        }
        Ok(())
    };
    emit(&mut out, 0, &problem.objective, -1.0)?;
    for (j, c) in problem.constraints.iter().enumerate() {
        emit(&mut out, j + 1, &c.form, 1.0)?;
    }
    Ok(out)
}

pub fn write_file(problem: &SdpProblem, path: &Path) -> Result<(), SdpError> {
    let text = to_string(problem)?;
    std::fs::write(path, text).map_err(|e| SdpError::Io(format!("{}: {}", path.display(), e)))
}

pub fn read_file(path: &Path) -> Result<SdpProblem, SdpError> {
    let text = std::fs::read_to_string(path).map_err(|e| SdpError::Io(format!("{}: {}", path.display(), e)))?;
    parse(&text)
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut header = true;
        for (ln, line) in text.lines().enumerate() {
            let trimmed = line.trim_start();
            if header && (trimmed.starts_with('"') || trimmed.starts_with('*')) {
                continue;
            }
            if !trimmed.is_empty() {
                header = false;
            }
            for tok in line.split(|c: char| c.is_whitespace() || "{}(),".contains(c)) {
                // Trailing annotations such as `=mDIM` are ignored.
                let annotation = tok.starts_with(|c: char| c.is_ascii_alphabetic() || "=\"*".contains(c));
                if !tok.is_empty() && !annotation {
                    items.push((ln + 1, tok));
                }
            }
        }
        Tokens { items, pos: 0 }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).or(self.items.last()).map(|t| t.0).unwrap_or(1)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), SdpError> {
        let t = self.items.get(self.pos).copied().ok_or_else(|| SdpError::Format {
            line: self.line(),
            msg: format!("unexpected end of input, expected {}", what),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn int(&mut self, what: &str) -> Result<(usize, i64), SdpError> {
        let (ln, tok) = self.next(what)?;
        let v = tok.parse::<f64>().ok().filter(|v| v.fract() == 0.0 && v.abs() < 1e15).ok_or_else(|| {
            SdpError::Format { line: ln, msg: format!("expected integer {}, found '{}'", what, tok) }
        })?;
        Ok((ln, v as i64))
    }

    fn float(&mut self, what: &str) -> Result<(usize, f64), SdpError> {
        let (ln, tok) = self.next(what)?;
        let v = tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| SdpError::Format {
            line: ln,
            msg: format!("expected number {}, found '{}'", what, tok),
        })?;
        Ok((ln, v))
    }

    fn done(&self) -> bool {
        self.pos >= self.items.len()
    }
}

enum BlockKind {
    /// Index of the PSD block in the problem.
    Dense(usize),
    /// Index of the first one-by-one block.
    Diagonal(usize),
}

pub fn parse(text: &str) -> Result<SdpProblem, SdpError> {
    let mut t = Tokens::new(text);
    let (ln, m) = t.int("constraint count")?;
    if m < 0 {
        return Err(SdpError::Format { line: ln, msg: "negative constraint count".into() });
    }
    let m = m as usize;
    let (ln, nb) = t.int("block count")?;
    if nb <= 0 {
        return Err(SdpError::Format { line: ln, msg: "block count must be positive".into() });
    }
    let mut blocks = Vec::new();
    let mut kinds = Vec::new();
    let mut sizes = Vec::new();
    for _ in 0..nb {
        let (ln, s) = t.int("block size")?;
        if s == 0 {
            return Err(SdpError::Format { line: ln, msg: "zero block size".into() });
        }
        if s > 0 {
            kinds.push(BlockKind::Dense(blocks.len()));
            blocks.push(s as usize);
        } else {
            kinds.push(BlockKind::Diagonal(blocks.len()));
            blocks.extend(std::iter::repeat_n(1, (-s) as usize));
        }
        sizes.push(s.unsigned_abs() as usize);
    }
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        rhs.push(t.float("right-hand side")?.1);
    }
    let mut forms = vec![LinearForm::default(); m + 1];
    while !t.done() {
        let (ln, mat) = t.int("matrix number")?;
        let (_, blk) = t.int("block number")?;
        let (_, i) = t.int("row")?;
        let (_, j) = t.int("column")?;
        let (_, v) = t.float("value")?;
        if mat < 0 || mat as usize > m {
            return Err(SdpError::Format { line: ln, msg: format!("matrix number {} out of range", mat) });
        }
        if blk < 1 || blk as usize > sizes.len() {
            return Err(SdpError::Format { line: ln, msg: format!("block number {} out of range", blk) });
        }
        let bi = blk as usize - 1;
        let n = sizes[bi] as i64;
        if i < 1 || j < 1 || i > n || j > n {
            return Err(SdpError::Format { line: ln, msg: format!("entry ({}, {}) outside block of size {}", i, j, n) });
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        let sign = if mat == 0 { -1.0 } else { 1.0 };
        let entry = match kinds[bi] {
            BlockKind::Dense(b) => SymEntry::new(b, i, j, sign * v),
            BlockKind::Diagonal(first) => {
                if i != j {
                    return Err(SdpError::Format { line: ln, msg: "off-diagonal entry in diagonal block".into() });
                }
                SymEntry::new(first + i, 0, 0, sign * v)
            }
        };
        forms[mat as usize].entries.push(entry);
    }
    let mut problem = SdpProblem::new(blocks, 0);
    let mut forms = forms.into_iter();
    problem.objective = forms.next().unwrap_or_default();
    for (form, b) in forms.zip(rhs) {
        problem.add_constraint(form, b);
    }
    Ok(problem)
}
