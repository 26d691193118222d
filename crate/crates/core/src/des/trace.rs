//! Structured, line-oriented simulation trace.
//!
//! Each record renders as one line with a fixed field order:
//!
//! ```text
//! time_ns=2012000 event=17 node=3 kind=PACKET_DELIVER packet=5 src=10.0.0.1 ...
//! ```
//!
//! `event` and `node` render as `-` when absent. Detail values keep their
//! insertion order. Floats render with `{:?}` (shortest round-trip form, always
//! carrying a `.`, `e`, `inf` or `NaN`), so integers and floats stay
//! distinguishable when a trace is read back. Trace files start with the
//! header line `format = 1`.

use std::borrow::Cow;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use super::scheduler::EventId;
use super::time::SimTime;

pub const TRACE_FORMAT_HEADER: &str = "format = 1";

/// A primitive detail value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    U64(u64),
    I64(i64),
    F64(f64),
    Str(String),
}

impl Value {
    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            Value::U64(v) => Some(v),
            Value::I64(v) => u64::try_from(v).ok(),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::U64(v) => i64::try_from(v).ok(),
            Value::I64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::U64(v) => Some(v as f64),
            Value::I64(v) => Some(v as f64),
            Value::F64(v) => Some(v),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    fn parse(token: &str) -> Result<Value, TraceParseError> {
        if let Some(quoted) = token.strip_prefix('"') {
            return unquote(quoted).map(Value::Str);
        }
        if let Ok(v) = token.parse::<u64>() {
            return Ok(Value::U64(v));
        }
        if let Ok(v) = token.parse::<i64>() {
            return Ok(Value::I64(v));
        }
        let looks_float =
            token.contains(['.', 'e', 'E']) || matches!(token, "inf" | "-inf" | "NaN");
        if looks_float {
            if let Ok(v) = token.parse::<f64>() {
                return Ok(Value::F64(v));
            }
        }
        Ok(Value::Str(token.to_owned()))
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.starts_with('"')
        || s.chars()
            .any(|c| c.is_whitespace() || c == '=' || c.is_control())
}

fn unquote(rest: &str) -> Result<String, TraceParseError> {
    let body = rest
        .strip_suffix('"')
        .ok_or_else(|| TraceParseError::new("unterminated quoted value"))?;
    let mut out = String::with_capacity(body.len());
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('\'') => out.push('\''),
            _ => return Err(TraceParseError::new("bad escape in quoted value")),
        }
    }
    Ok(out)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::U64(v) => write!(f, "{v}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v:?}"),
            Value::Str(s) if needs_quotes(s) => write!(f, "{s:?}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

macro_rules! value_from {
    ($($t:ty => $variant:ident as $cast:ty),* $(,)?) => {
        $(impl From<$t> for Value {
            fn from(v: $t) -> Self {
                Value::$variant(v as $cast)
            }
        })*
    };
}

value_from!(
    u8 => U64 as u64,
    u16 => U64 as u64,
    u32 => U64 as u64,
    u64 => U64 as u64,
    usize => U64 as u64,
    i32 => I64 as i64,
    i64 => I64 as i64,
    f64 => F64 as f64,
);

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl From<SimTime> for Value {
    fn from(v: SimTime) -> Self {
        Value::U64(v.as_nanos())
    }
}

impl From<std::net::Ipv4Addr> for Value {
    fn from(v: std::net::Ipv4Addr) -> Self {
        Value::Str(v.to_string())
    }
}

pub type Detail = Vec<(Cow<'static, str>, Value)>;

/// One line of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub event: Option<EventId>,
    pub node: Option<u32>,
    pub kind: Cow<'static, str>,
    pub detail: Detail,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.detail.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key).and_then(Value::as_u64)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_f64)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "time_ns={}", self.time.as_nanos())?;
        match self.event {
            Some(id) => write!(f, " event={}", id.as_u64())?,
            None => f.write_str(" event=-")?,
        }
        match self.node {
            Some(n) => write!(f, " node={n}")?,
            None => f.write_str(" node=-")?,
        }
        write!(f, " kind={}", self.kind)?;
        for (k, v) in &self.detail {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed trace line: {message}")]
pub struct TraceParseError {
    message: String,
}

impl TraceParseError {
    fn new(message: impl Into<String>) -> Self {
        TraceParseError {
            message: message.into(),
        }
    }
}

/// Splits on spaces, keeping quoted values (which may contain spaces) whole.
fn tokens(line: &str) -> Result<Vec<&str>, TraceParseError> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut start = None;
    let mut in_quotes = false;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match (b, in_quotes) {
            (b'\\', true) => i += 1,
            (b'"', _) => in_quotes = !in_quotes,
            (b' ', false) => {
                if let Some(s) = start.take() {
                    out.push(&line[s..i]);
                }
                i += 1;
                continue;
            }
            _ => {}
        }
        if start.is_none() {
            start = Some(i);
        }
        i += 1;
    }
    if in_quotes {
        return Err(TraceParseError::new("unterminated quote"));
    }
    if let Some(s) = start {
        out.push(&line[s..]);
    }
    Ok(out)
}

fn split_pair(token: &str) -> Result<(&str, &str), TraceParseError> {
    token
        .split_once('=')
        .ok_or_else(|| TraceParseError::new(format!("expected key=value, got `{token}`")))
}

fn expect_field<'a>(token: Option<&&'a str>, key: &str) -> Result<&'a str, TraceParseError> {
    let token = token.ok_or_else(|| TraceParseError::new(format!("missing `{key}`")))?;
    let (k, v) = split_pair(token)?;
    if k != key {
        return Err(TraceParseError::new(format!("expected `{key}`, got `{k}`")));
    }
    Ok(v)
}

fn optional_number<T: FromStr>(value: &str, key: &str) -> Result<Option<T>, TraceParseError> {
    if value == "-" {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| TraceParseError::new(format!("bad `{key}` value `{value}`")))
}

impl FromStr for TraceRecord {
    type Err = TraceParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let toks = tokens(line)?;
        let mut it = toks.iter();
        let time = expect_field(it.next(), "time_ns")?
            .parse::<u64>()
            .map_err(|_| TraceParseError::new("bad time_ns"))?;
        let event = optional_number::<u64>(expect_field(it.next(), "event")?, "event")?;
        let node = optional_number::<u32>(expect_field(it.next(), "node")?, "node")?;
        let kind = expect_field(it.next(), "kind")?.to_owned();
        let detail = it
            .map(|tok| {
                let (k, v) = split_pair(tok)?;
                Ok((Cow::Owned(k.to_owned()), Value::parse(v)?))
            })
            .collect::<Result<Detail, TraceParseError>>()?;
        Ok(TraceRecord {
            time: SimTime::from_nanos(time),
            event: event.map(EventId::from_u64),
            node,
            kind: Cow::Owned(kind),
            detail,
        })
    }
}

/// In-memory trace buffer.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(last.time <= record.time, "trace time went backwards");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of the given kind, in trace order.
    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn count(&self, kind: &str) -> usize {
        self.of_kind(kind).count()
    }

    /// Writes the header line and one line per record.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_FORMAT_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{r}")?;
        }
        out.flush()
    }

    /// Parses a trace file body (header line required).
    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_FORMAT_HEADER => {}
            _ => return Err(TraceParseError::new("missing `format = 1` header")),
        }
        let records = lines
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trace { records })
    }
}
