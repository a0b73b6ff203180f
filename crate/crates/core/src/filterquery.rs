//! Boolean keyword queries for pulling disaster-relevant messages out of a
//! raw corpus.
//!
//! Grammar (operators are uppercase; precedence `NOT` > `AND` > `OR`):
//!
//! ```text
//! or      := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | primary
//! primary := TERM | "\"" words "\"" | "(" or ")"
//! ```
//!
//! Literals are case-insensitive and match whole words: a literal is split
//! into alphanumeric tokens and matches when those tokens occur contiguously
//! in the tweet's lowercased token stream, so `aid` does not match `said`.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabeledTweet, TweetCollection};
use crate::par;
use crate::preprocess::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("query has no positive (non-negated) literal")]
    NoPositiveLiteral,
    #[error("lexicon contains no terms")]
    EmptyLexicon,
    #[error("i/o error reading lexicon: {0}")]
    Io(String),
    #[error("invalid timestamp {0:?}")]
    Timestamp(String),
}

fn syntax(pos: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax { pos, message: message.into() }
}

/// Which lexicon a query came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    GenericDisaster,
    UnCluster,
    AidType,
    Location,
    #[default]
    Custom,
}

/// A term or quoted phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Literal {
    text: String,
    tokens: Vec<String>,
    phrase: bool,
}

impl Literal {
    fn new(raw: &str, phrase: bool, pos: usize) -> Result<Self, QueryError> {
        let text = raw.trim().to_lowercase();
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            return Err(syntax(pos, format!("literal {raw:?} has no word characters")));
        }
        Ok(Literal { text, tokens, phrase })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn matches(&self, words: &[String]) -> bool {
        let n = self.tokens.len();
        n <= words.len() && words.windows(n).any(|w| w == self.tokens.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Literal),
    Not(Box<Expr>),
    /// Two or more conjuncts, never directly nested.
    And(Vec<Expr>),
    /// Two or more disjuncts, never directly nested.
    Or(Vec<Expr>),
}

impl Expr {
    fn eval(&self, words: &[String]) -> bool {
        match self {
            Expr::Lit(l) => l.matches(words),
            Expr::Not(e) => !e.eval(words),
            Expr::And(es) => es.iter().all(|e| e.eval(words)),
            Expr::Or(es) => es.iter().any(|e| e.eval(words)),
        }
    }

    fn has_positive(&self, negated: bool) -> bool {
        match self {
            Expr::Lit(_) => !negated,
            Expr::Not(e) => e.has_positive(!negated),
            Expr::And(es) | Expr::Or(es) => es.iter().any(|e| e.has_positive(negated)),
        }
    }

    fn and(parts: Vec<Expr>) -> Expr {
        Self::join(parts, true)
    }

    fn or(parts: Vec<Expr>) -> Expr {
        Self::join(parts, false)
    }

    fn join(parts: Vec<Expr>, conj: bool) -> Expr {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match (p, conj) {
                (Expr::And(inner), true) | (Expr::Or(inner), false) => flat.extend(inner),
                (other, _) => flat.push(other),
            }
        }
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        if conj {
            Expr::And(flat)
        } else {
            Expr::Or(flat)
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(_) => 0,
            Expr::And(_) => 1,
            Expr::Not(_) | Expr::Lit(_) => 2,
        }
    }

    fn fmt_child(&self, child: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if child.precedence() < self.precedence() || (matches!(self, Expr::Not(_)) && child.precedence() < 2) {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

/// Canonical form: lowercase literals, minimal parentheses.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(l) if l.phrase => write!(f, "\"{}\"", l.text),
            Expr::Lit(l) => f.write_str(&l.text),
            Expr::Not(e) => {
                f.write_str("NOT ")?;
                self.fmt_child(e, f)
            }
            Expr::And(es) | Expr::Or(es) => {
                let op = if matches!(self, Expr::And(_)) { " AND " } else { " OR " };
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    self.fmt_child(e, f)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub expr: Expr,
    pub source: SourceTag,
}

impl Query {
    pub fn with_source(mut self, source: SourceTag) -> Self {
        self.source = source;
        self
    }

    /// Whether `text` satisfies the query (case-insensitive, whole words).
    pub fn matches(&self, text: &str) -> bool {
        self.expr.eval(&words_of(text))
    }

    /// Like [`Query::matches`] on text already split by [`words_of`].
    pub fn matches_words(&self, words: &[String]) -> bool {
        self.expr.eval(words)
    }

    fn from_expr(expr: Expr, source: SourceTag) -> Result<Self, QueryError> {
        if !expr.has_positive(false) {
            return Err(QueryError::NoPositiveLiteral);
        }
        Ok(Query { expr, source })
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_query(s)
    }
}

/// Lowercased word tokens of a raw tweet.
pub fn words_of(text: &str) -> Vec<String> {
    tokenize(&text.to_lowercase())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Word(String),
    Phrase(String),
}

fn lex(s: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            chars.next();
            out.push((pos, Tok::LParen));
        } else if c == ')' {
            chars.next();
            out.push((pos, Tok::RParen));
        } else if c == '"' {
            chars.next();
            let start = pos + 1;
            let mut end = None;
            for (p, ch) in chars.by_ref() {
                if ch == '"' {
                    end = Some(p);
                    break;
                }
            }
            let end = end.ok_or_else(|| syntax(pos, "unterminated phrase"))?;
            out.push((pos, Tok::Phrase(s[start..end].to_string())));
        } else {
            let mut end = s.len();
            while let Some(&(p, ch)) = chars.peek() {
                if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                    end = p;
                    break;
                }
                chars.next();
            }
            let word = &s[pos..end];
            let tok = match word {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => Tok::Word(word.to_string()),
            };
            out.push((pos, tok));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.len, |(p, _)| *p)
    }

    fn or(&mut self) -> Result<Expr, QueryError> {
        let mut parts = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.at += 1;
            parts.push(self.and()?);
        }
        Ok(Expr::or(parts))
    }

    fn and(&mut self) -> Result<Expr, QueryError> {
        let mut parts = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.at += 1;
            parts.push(self.unary()?);
        }
        Ok(Expr::and(parts))
    }

    fn unary(&mut self) -> Result<Expr, QueryError> {
        if self.peek() == Some(&Tok::Not) {
            self.at += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, QueryError> {
        let pos = self.pos();
        let Some((_, tok)) = self.toks.get(self.at).cloned() else {
            return Err(syntax(pos, "unexpected end of query"));
        };
        self.at += 1;
        match tok {
            Tok::Word(w) => Ok(Expr::Lit(Literal::new(&w, false, pos)?)),
            Tok::Phrase(p) => Ok(Expr::Lit(Literal::new(&p, true, pos)?)),
            Tok::LParen => {
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(syntax(self.pos(), "expected ')'"));
                }
                self.at += 1;
                Ok(inner)
            }
            Tok::RParen => Err(syntax(pos, "unexpected ')'")),
            Tok::And | Tok::Or => Err(syntax(pos, "operator without left operand")),
            Tok::Not => unreachable!("handled in unary"),
        }
    }
}

pub fn parse_query(s: &str) -> Result<Query, QueryError> {
    let toks = lex(s)?;
    let mut p = Parser { toks, at: 0, len: s.len() };
    let expr = p.or()?;
    if p.at < p.toks.len() {
        return Err(syntax(p.pos(), "unexpected token"));
    }
    Query::from_expr(expr, SourceTag::Custom)
}

/// Reads a lexicon (one term or phrase per line, `#` comments) into a single
/// disjunction.
pub fn read_lexicon<R: BufRead>(reader: R, source: SourceTag) -> Result<Query, QueryError> {
    let mut lits = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| QueryError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let phrase = line.split_whitespace().count() > 1;
        lits.push(Expr::Lit(Literal::new(line, phrase, i)?));
    }
    if lits.is_empty() {
        return Err(QueryError::EmptyLexicon);
    }
    Query::from_expr(Expr::or(lits), source)
}

/// How lexicon and location queries combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    And,
    Or,
}

/// `(lexicon_1 OR lexicon_2 ...) AND/OR (location)`.
pub fn compose(lexicons: Vec<Query>, location: Option<Query>, mode: Combine) -> Option<Query> {
    let lex = (!lexicons.is_empty()).then(|| Expr::or(lexicons.into_iter().map(|q| q.expr).collect()));
    let expr = match (lex, location) {
        (Some(l), Some(loc)) => match mode {
            Combine::And => Expr::and(vec![l, loc.expr]),
            Combine::Or => Expr::or(vec![l, loc.expr]),
        },
        (Some(l), None) => l,
        (None, Some(loc)) => loc.expr,
        (None, None) => return None,
    };
    Some(Query { expr, source: SourceTag::Custom })
}

/// Inclusive timestamp window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
}

impl TimeWindow {
    pub fn is_unbounded(&self) -> bool {
        self.start.is_none() && self.end.is_none()
    }

    /// Tweets without a parseable timestamp fall outside any bounded window.
    pub fn contains(&self, created_at: Option<&str>) -> bool {
        if self.is_unbounded() {
            return true;
        }
        let Some(ts) = created_at.and_then(|s| parse_timestamp(s).ok()) else {
            return false;
        };
        self.start.is_none_or(|s| ts >= s) && self.end.is_none_or(|e| ts <= e)
    }
}

/// RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC) or a bare date (midnight UTC).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, QueryError> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Ok(dt.and_utc());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(QueryError::Timestamp(s.to_string()))
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: TweetCollection,
    /// Number of tweets matched by each query, in query order.
    pub hits: Vec<usize>,
}

/// Keeps the tweets matching at least one query, in input order.
pub fn filter_corpus(queries: &[Query], c: &TweetCollection) -> FilterOutcome {
    filter_corpus_within(queries, c, &TimeWindow::default())
}

pub fn filter_corpus_within(queries: &[Query], c: &TweetCollection, window: &TimeWindow) -> FilterOutcome {
    let per_tweet: Vec<Vec<bool>> = par::map(c.items(), |t: &LabeledTweet| {
        if !window.contains(t.tweet.created_at.as_deref()) {
            return vec![false; queries.len()];
        }
        let words = words_of(&t.tweet.text);
        queries.iter().map(|q| q.matches_words(&words)).collect()
    });
    let mut hits = vec![0; queries.len()];
    let mut keep = Vec::new();
    for (i, row) in per_tweet.iter().enumerate() {
        for (h, &m) in hits.iter_mut().zip(row) {
            *h += m as usize;
        }
        if row.iter().any(|&m| m) {
            keep.push(i);
        }
    }
    FilterOutcome { kept: c.select(&keep), hits }
}
