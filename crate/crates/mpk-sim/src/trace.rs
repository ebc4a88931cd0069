//! Textual trace format: one op per line, `#` comments, whitespace
//! separated fields. The first field names the acting thread (`T0`,
//! `T1`, ...), the second the verb. Page spans are written `base:count`;
//! rights tokens are `rw|ro|na|x` (x = exec-only).

use crate::hw::{AccessRight, PagePerm, PageId, Pkey};
use crate::kernel::PageRange;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at line {line}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verb {
    Init { evict_rate: f64 },
    Mmap { vkey: u64, len: u64, prot: PagePerm },
    Munmap { vkey: u64 },
    Begin { vkey: u64, prot: AccessRight },
    End { vkey: u64 },
    Mprotect { vkey: u64, prot: PagePerm },
    Malloc { vkey: u64, size: u64, label: String },
    Free { label: String },
    Read { page: PageId },
    Write { page: PageId },
    Fetch { page: PageId },
    RawPkeyAlloc { rights: AccessRight },
    RawPkeyFree { pkey: Pkey },
    RawPkeyMprotect { range: PageRange, prot: PagePerm, pkey: Pkey },
    RawMprotect { range: PageRange, prot: PagePerm },
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Init { .. } => "init",
            Verb::Mmap { .. } => "mmap",
            Verb::Munmap { .. } => "munmap",
            Verb::Begin { .. } => "begin",
            Verb::End { .. } => "end",
            Verb::Mprotect { .. } => "mprotect",
            Verb::Malloc { .. } => "malloc",
            Verb::Free { .. } => "free",
            Verb::Read { .. } => "read",
            Verb::Write { .. } => "write",
            Verb::Fetch { .. } => "fetch",
            Verb::RawPkeyAlloc { .. } => "raw_pkey_alloc",
            Verb::RawPkeyFree { .. } => "raw_pkey_free",
            Verb::RawPkeyMprotect { .. } => "raw_pkey_mprotect",
            Verb::RawMprotect { .. } => "raw_mprotect",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOp {
    pub line: usize,
    pub thread: usize,
    pub verb: Verb,
}

fn err(line: usize, msg: impl Into<String>) -> SyntaxError {
    SyntaxError { line, msg: msg.into() }
}

fn parse_perm(tok: &str, line: usize) -> Result<PagePerm, SyntaxError> {
    match tok {
        "rw" => Ok(PagePerm::RW),
        "ro" => Ok(PagePerm::R),
        "na" => Ok(PagePerm::NONE),
        "x" => Ok(PagePerm::X),
        other => Err(err(line, format!("unknown permission token '{other}'"))),
    }
}

fn parse_right(tok: &str, line: usize) -> Result<AccessRight, SyntaxError> {
    match tok {
        "rw" => Ok(AccessRight::READ_WRITE),
        "ro" => Ok(AccessRight::READ_ONLY),
        "na" => Ok(AccessRight::NO_ACCESS),
        other => Err(err(line, format!("unknown rights token '{other}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, what: &str, line: usize) -> Result<T, SyntaxError> {
    tok.parse()
        .map_err(|_| err(line, format!("invalid {what} '{tok}'")))
}

fn parse_span(tok: &str, line: usize) -> Result<PageRange, SyntaxError> {
    let (base, count) = tok
        .split_once(':')
        .ok_or_else(|| err(line, format!("expected base:count span, got '{tok}'")))?;
    Ok(PageRange::new(
        parse_num(base, "span base", line)?,
        parse_num(count, "span count", line)?,
    ))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceOp>, SyntaxError> {
    let mut ops = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let thread_tok = fields[0];
        let thread: usize = thread_tok
            .strip_prefix('T')
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(line, format!("expected thread id like 'T0', got '{thread_tok}'")))?;
        let verb_tok = *fields
            .get(1)
            .ok_or_else(|| err(line, "missing verb"))?;
        let args = &fields[2..];
        let want = |n: usize| -> Result<(), SyntaxError> {
            if args.len() != n {
                Err(err(line, format!("verb '{verb_tok}' expects {n} argument(s), got {}", args.len())))
            } else {
                Ok(())
            }
        };
        let verb = match verb_tok {
            "init" => {
                want(1)?;
                let evict_rate: f64 = parse_num(args[0], "eviction rate", line)?;
                if !(0.0..=1.0).contains(&evict_rate) {
                    return Err(err(line, "eviction rate must be within [0, 1]"));
                }
                Verb::Init { evict_rate }
            }
            "mmap" => {
                want(3)?;
                Verb::Mmap {
                    vkey: parse_num(args[0], "vkey", line)?,
                    len: parse_num(args[1], "length", line)?,
                    prot: parse_perm(args[2], line)?,
                }
            }
            "munmap" => {
                want(1)?;
                Verb::Munmap { vkey: parse_num(args[0], "vkey", line)? }
            }
            "begin" => {
                want(2)?;
                Verb::Begin {
                    vkey: parse_num(args[0], "vkey", line)?,
                    prot: parse_right(args[1], line)?,
                }
            }
            "end" => {
                want(1)?;
                Verb::End { vkey: parse_num(args[0], "vkey", line)? }
            }
            "mprotect" => {
                want(2)?;
                Verb::Mprotect {
                    vkey: parse_num(args[0], "vkey", line)?,
                    prot: parse_perm(args[1], line)?,
                }
            }
            "malloc" => {
                want(3)?;
                Verb::Malloc {
                    vkey: parse_num(args[0], "vkey", line)?,
                    size: parse_num(args[1], "size", line)?,
                    label: args[2].to_string(),
                }
            }
            "free" => {
                want(1)?;
                Verb::Free { label: args[0].to_string() }
            }
            "read" | "write" | "fetch" => {
                want(1)?;
                let page = parse_num(args[0], "page id", line)?;
                match verb_tok {
                    "read" => Verb::Read { page },
                    "write" => Verb::Write { page },
                    _ => Verb::Fetch { page },
                }
            }
            "raw_pkey_alloc" => {
                want(1)?;
                Verb::RawPkeyAlloc { rights: parse_right(args[0], line)? }
            }
            "raw_pkey_free" => {
                want(1)?;
                Verb::RawPkeyFree { pkey: parse_num(args[0], "pkey", line)? }
            }
            "raw_pkey_mprotect" => {
                want(3)?;
                Verb::RawPkeyMprotect {
                    range: parse_span(args[0], line)?,
                    prot: parse_perm(args[1], line)?,
                    pkey: parse_num(args[2], "pkey", line)?,
                }
            }
            "raw_mprotect" => {
                want(2)?;
                Verb::RawMprotect {
                    range: parse_span(args[0], line)?,
                    prot: parse_perm(args[1], line)?,
                }
            }
            other => return Err(err(line, format!("unknown verb '{other}'"))),
        };
        ops.push(TraceOp { line, thread, verb });
    }
    Ok(ops)
}
