//! Recursive-descent parser for the pulse-program text format.
//!
//! ```text
//! program  = { item } ;
//! item     = pulse | delay | acquire | block ;
//! pulse    = "p" "(" arg "," arg ")" ;          (* angle in degrees, phase *)
//! delay    = "d" "(" arg ")" ;
//! acquire  = "acq" "(" arg "," arg ")" ;        (* duration, dwell *)
//! block    = "[" { item } "]" "*" count ;
//! arg      = word | "{" word { "," word } "}" ;  (* lists cycle per iteration *)
//! phase    = "x" | "y" | "-x" | "-y" | degrees ;
//! duration = number [ "ns" | "us" | "ms" | "s" ] ;
//! ```
//!
//! `#` starts a comment that runs to the end of the line. A list argument
//! picks element `i mod len` on iteration `i` of the innermost enclosing
//! block, and its first element outside any block.

use super::program::{EventKind, PulseProgram};
use super::units::parse_duration;
use crate::{Error, Span};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Star,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn is_punct(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | '{' | '}' | ',' | '*' | '#')
}

fn lex(source: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (li, line) in source.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let span = Span { line: li + 1, column: i + 1 };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let tok = match c {
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                '[' => Some(Tok::LBracket),
                ']' => Some(Tok::RBracket),
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                ',' => Some(Tok::Comma),
                '*' => Some(Tok::Star),
                _ => None,
            };
            if let Some(tok) = tok {
                out.push(Token { tok, span });
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !is_punct(chars[i]) {
                i += 1;
            }
            out.push(Token { tok: Tok::Word(chars[start..i].iter().collect()), span });
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Arg {
    words: Vec<(String, Span)>,
}

#[derive(Debug, Clone)]
enum Node {
    Pulse { angle: Arg, phase: Arg },
    Delay { duration: Arg },
    Acquire { duration: Arg, dwell: Arg },
    Block { items: Vec<Node>, count: usize },
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: Span,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn span(&self) -> Span {
        self.peek().map(|t| t.span).unwrap_or(self.end)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, Error> {
        Err(Error::Syntax { span: self.span(), message: message.into() })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Span, Error> {
        match self.peek() {
            Some(t) if t.tok == want => {
                let span = t.span;
                self.pos += 1;
                Ok(span)
            }
            _ => self.syntax(format!("expected {what}")),
        }
    }

    fn word(&mut self, what: &str) -> Result<(String, Span), Error> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), span }) => {
                let out = (w.clone(), *span);
                self.pos += 1;
                Ok(out)
            }
            _ => self.syntax(format!("expected {what}")),
        }
    }

    fn arg(&mut self, what: &str) -> Result<Arg, Error> {
        if matches!(self.peek(), Some(Token { tok: Tok::LBrace, .. })) {
            self.pos += 1;
            let mut words = vec![self.word(what)?];
            loop {
                match self.peek().map(|t| &t.tok) {
                    Some(Tok::Comma) => {
                        self.pos += 1;
                        words.push(self.word(what)?);
                    }
                    Some(Tok::RBrace) => {
                        self.pos += 1;
                        break;
                    }
                    _ => return self.syntax("expected `,` or `}` in list"),
                }
            }
            Ok(Arg { words })
        } else {
            Ok(Arg { words: vec![self.word(what)?] })
        }
    }

    fn items(&mut self, in_block: bool) -> Result<Vec<Node>, Error> {
        let mut items = Vec::new();
        loop {
            let Some(tok) = self.peek().cloned() else {
                if in_block {
                    return self.syntax("unterminated block, expected `]`");
                }
                return Ok(items);
            };
            match tok.tok {
                Tok::RBracket if in_block => return Ok(items),
                Tok::LBracket => {
                    self.pos += 1;
                    let inner = self.items(true)?;
                    self.expect(Tok::RBracket, "`]`")?;
                    self.expect(Tok::Star, "`*` after block")?;
                    let (count, span) = self.word("repetition count")?;
                    let count: usize = count
                        .parse()
                        .map_err(|_| Error::Syntax { span, message: format!("invalid repetition count `{count}`") })?;
                    if count == 0 {
                        return Err(Error::Validation("repetition count must be at least 1".into()));
                    }
                    items.push(Node::Block { items: inner, count });
                }
                Tok::Word(ref w) => {
                    self.pos += 1;
                    let node = match w.as_str() {
                        "p" => {
                            self.expect(Tok::LParen, "`(`")?;
                            let angle = self.arg("pulse angle")?;
                            self.expect(Tok::Comma, "`,`")?;
                            let phase = self.arg("pulse phase")?;
                            self.expect(Tok::RParen, "`)`")?;
                            Node::Pulse { angle, phase }
                        }
                        "d" => {
                            self.expect(Tok::LParen, "`(`")?;
                            let duration = self.arg("duration")?;
                            self.expect(Tok::RParen, "`)`")?;
                            Node::Delay { duration }
                        }
                        "acq" => {
                            self.expect(Tok::LParen, "`(`")?;
                            let duration = self.arg("acquisition duration")?;
                            self.expect(Tok::Comma, "`,`")?;
                            let dwell = self.arg("dwell time")?;
                            self.expect(Tok::RParen, "`)`")?;
                            Node::Acquire { duration, dwell }
                        }
                        other => {
                            return Err(Error::Syntax {
                                span: tok.span,
                                message: format!("unknown statement `{other}`, expected p, d, acq or `[`"),
                            })
                        }
                    };
                    items.push(node);
                }
                _ => return self.syntax("expected a statement"),
            }
        }
    }
}

fn parse_phase(word: &str, span: Span) -> Result<f64, Error> {
    match word {
        "x" | "+x" => Ok(0.0),
        "y" | "+y" => Ok(90.0),
        "-x" => Ok(180.0),
        "-y" => Ok(270.0),
        other => match other.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::UnknownPhase { span, phase: other.to_string() }),
        },
    }
}

fn parse_angle(word: &str, span: Span) -> Result<f64, Error> {
    match word.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Syntax { span, message: format!("invalid pulse angle `{word}` (degrees)") }),
    }
}

fn parse_time(word: &str, span: Span) -> Result<f64, Error> {
    parse_duration(word).map_err(|_| Error::Syntax { span, message: format!("invalid duration `{word}`") })
}

fn pick<T>(arg: &Arg, iteration: usize, f: fn(&str, Span) -> Result<T, Error>) -> Result<T, Error> {
    let (w, span) = &arg.words[iteration % arg.words.len()];
    f(w, *span)
}

fn check_all<T>(arg: &Arg, f: fn(&str, Span) -> Result<T, Error>) -> Result<(), Error> {
    for (w, span) in &arg.words {
        f(w, *span)?;
    }
    Ok(())
}

fn check(nodes: &[Node], cycle: &mut usize) -> Result<(), Error> {
    for node in nodes {
        let args: Vec<&Arg> = match node {
            Node::Pulse { angle, phase } => {
                check_all(angle, parse_angle)?;
                check_all(phase, parse_phase)?;
                vec![angle, phase]
            }
            Node::Delay { duration } => {
                check_all(duration, parse_time)?;
                vec![duration]
            }
            Node::Acquire { duration, dwell } => {
                check_all(duration, parse_time)?;
                check_all(dwell, parse_time)?;
                vec![duration, dwell]
            }
            Node::Block { items, .. } => {
                check(items, cycle)?;
                vec![]
            }
        };
        for a in args {
            *cycle = (*cycle).max(a.words.len());
        }
    }
    Ok(())
}

fn expand(nodes: &[Node], iteration: usize, out: &mut Vec<EventKind>) -> Result<(), Error> {
    for node in nodes {
        match node {
            Node::Pulse { angle, phase } => out.push(EventKind::Pulse {
                angle_deg: pick(angle, iteration, parse_angle)?,
                phase_deg: pick(phase, iteration, parse_phase)?,
            }),
            Node::Delay { duration } => out.push(EventKind::Delay { duration: pick(duration, iteration, parse_time)? }),
            Node::Acquire { duration, dwell } => out.push(EventKind::Acquire {
                duration: pick(duration, iteration, parse_time)?,
                dwell: pick(dwell, iteration, parse_time)?,
            }),
            Node::Block { items, count } => {
                for i in 0..*count {
                    expand(items, i, out)?;
                }
            }
        }
    }
    Ok(())
}

/// Parse, expand and compile pulse-program source text.
pub fn parse_program(source: &str) -> Result<PulseProgram, Error> {
    let tokens = lex(source);
    let end = Span { line: source.lines().count().max(1), column: source.lines().last().map_or(1, |l| l.chars().count() + 1) };
    let mut parser = Parser { tokens, pos: 0, end };
    let nodes = parser.items(false)?;
    if parser.pos < parser.tokens.len() {
        return parser.syntax("unexpected `]`");
    }
    let mut cycle = 1;
    check(&nodes, &mut cycle)?;
    let mut kinds = Vec::new();
    expand(&nodes, 0, &mut kinds)?;
    let mut program = PulseProgram::compile(kinds)?;
    program.source = Some(source.to_string());
    program.cycle_length = cycle;
    Ok(program)
}
