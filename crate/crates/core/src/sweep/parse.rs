use std::collections::BTreeMap;

use super::expr::{BinOp, Expr};
use super::{placeholders, Domain, InputTemplate, ParamKind, Parameter, Plan, PlanError, Segment, TaskTemplate, Value};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num { value: f64, integral: bool },
    Str(String),
    Semi,
    LParen,
    RParen,
    Op(BinOp),
    Newline,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
}

fn syntax(line: usize, message: impl Into<String>) -> PlanError {
    PlanError::Syntax {
        line,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, PlanError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                out.push(Token { tok: Tok::Newline, line });
                line += 1;
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    chars.next();
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(syntax(line, "bad escape in string")),
                        },
                        Some('\n') | None => return Err(syntax(line, "unterminated string")),
                        Some(ch) => s.push(ch),
                    }
                }
                out.push(Token { tok: Tok::Str(s), line });
            }
            ';' | '(' | ')' | '+' | '-' | '*' | '/' | '×' | '−' => {
                chars.next();
                let tok = match c {
                    ';' => Tok::Semi,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '+' => Tok::Op(BinOp::Add),
                    '-' | '−' => Tok::Op(BinOp::Sub),
                    '*' | '×' => Tok::Op(BinOp::Mul),
                    _ => Tok::Op(BinOp::Div),
                };
                out.push(Token { tok, line });
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    let exp_sign = (d == '+' || d == '-') && s.ends_with(['e', 'E']);
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                let value: f64 = s.parse().map_err(|_| syntax(line, format!("bad number `{s}`")))?;
                let integral = s.chars().all(|c| c.is_ascii_digit());
                out.push(Token {
                    tok: Tok::Num { value, integral },
                    line,
                });
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Ident(s), line });
            }
            other => return Err(syntax(line, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, line });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.bump();
        }
    }

    /// Next token that is not a newline.
    fn significant(&mut self) -> Token {
        self.skip_newlines();
        self.bump()
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), PlanError> {
        let t = self.significant();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line)),
            other => Err(syntax(t.line, format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<usize, PlanError> {
        let (s, line) = self.ident(&format!("`{kw}`"))?;
        if s != kw {
            return Err(syntax(line, format!("expected `{kw}`, found `{s}`")));
        }
        Ok(line)
    }

    /// A possibly negated numeric literal.
    fn number(&mut self) -> Result<(f64, bool, usize), PlanError> {
        let t = self.significant();
        let (neg, t) = if t.tok == Tok::Op(BinOp::Sub) { (true, self.bump()) } else { (false, t) };
        match t.tok {
            Tok::Num { value, integral } => Ok((if neg { -value } else { value }, integral, t.line)),
            other => Err(syntax(t.line, format!("expected a number, found {}", describe(&other)))),
        }
    }

    fn integer(&mut self) -> Result<i64, PlanError> {
        let (v, integral, line) = self.number()?;
        if !integral || v.abs() > 9.0e15 {
            return Err(syntax(line, format!("expected an integer, found {v}")));
        }
        Ok(v as i64)
    }

    fn end_of_statement(&mut self) -> Result<(), PlanError> {
        if self.peek().tok == Tok::Semi {
            self.bump();
        }
        let t = self.peek().clone();
        match t.tok {
            Tok::Newline | Tok::Eof => Ok(()),
            other => Err(syntax(t.line, format!("expected end of line, found {}", describe(&other)))),
        }
    }

    fn parameter(&mut self, line: usize) -> Result<Parameter, PlanError> {
        let (name, _) = self.ident("parameter name")?;
        let (kind_word, kline) = self.ident("parameter type")?;
        let kind = match kind_word.as_str() {
            "integer" => ParamKind::Integer,
            "float" => ParamKind::Float,
            "text" => ParamKind::Text,
            other => return Err(syntax(kline, format!("unknown parameter type `{other}`"))),
        };
        let (dom_word, dline) = self.ident("`range` or `select`")?;
        let domain = match dom_word.as_str() {
            "range" => {
                let d = match kind {
                    ParamKind::Integer => {
                        let lo = self.integer()?;
                        let hi = self.integer()?;
                        self.keyword("step")?;
                        let step = self.integer()?;
                        if step <= 0 {
                            return Err(PlanError::InvalidDomain { line, name, message: "step must be positive".into() });
                        }
                        if lo > hi {
                            return Err(PlanError::EmptyDomain { line, name });
                        }
                        Domain::IntRange { lo, hi, step }
                    }
                    ParamKind::Float => {
                        let lo = self.number()?.0;
                        let hi = self.number()?.0;
                        self.keyword("step")?;
                        let step = self.number()?.0;
                        if step <= 0.0 {
                            return Err(PlanError::InvalidDomain { line, name, message: "step must be positive".into() });
                        }
                        if lo > hi {
                            return Err(PlanError::EmptyDomain { line, name });
                        }
                        Domain::FloatRange { lo, hi, step }
                    }
                    ParamKind::Text => return Err(syntax(dline, "text parameters take `select`, not `range`")),
                };
                self.expect_semi()?;
                d
            }
            "select" => {
                let mut values = Vec::new();
                loop {
                    self.skip_newlines();
                    if self.peek().tok == Tok::Semi {
                        self.bump();
                        break;
                    }
                    let v = match kind {
                        ParamKind::Integer => Value::Int(self.integer()?),
                        ParamKind::Float => Value::Float(self.number()?.0),
                        ParamKind::Text => {
                            let t = self.significant();
                            match t.tok {
                                Tok::Str(s) => Value::Text(s),
                                other => return Err(syntax(t.line, format!("expected a string, found {}", describe(&other)))),
                            }
                        }
                    };
                    values.push(v);
                }
                if values.is_empty() {
                    return Err(PlanError::EmptyDomain { line, name });
                }
                Domain::Select(values)
            }
            other => return Err(syntax(dline, format!("expected `range` or `select`, found `{other}`"))),
        };
        Ok(Parameter { name, kind, domain })
    }

    fn expect_semi(&mut self) -> Result<(), PlanError> {
        let t = self.significant();
        match t.tok {
            Tok::Semi => Ok(()),
            other => Err(syntax(t.line, format!("expected `;`, found {}", describe(&other)))),
        }
    }

    fn expr(&mut self) -> Result<Expr, PlanError> {
        let mut lhs = self.term()?;
        while let Tok::Op(op @ (BinOp::Add | BinOp::Sub)) = self.peek().tok {
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, PlanError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(op @ (BinOp::Mul | BinOp::Div)) = self.peek().tok {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, PlanError> {
        if self.peek().tok == Tok::Op(BinOp::Sub) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let t = self.bump();
        match t.tok {
            Tok::Num { value, .. } => Ok(Expr::Num(value)),
            Tok::Ident(s) => Ok(Expr::Param(s)),
            Tok::LParen => {
                let e = self.expr()?;
                let close = self.bump();
                if close.tok != Tok::RParen {
                    return Err(syntax(close.line, format!("expected `)`, found {}", describe(&close.tok))));
                }
                Ok(e)
            }
            other => Err(syntax(t.line, format!("expected an operand, found {}", describe(&other)))),
        }
    }

    fn task(&mut self, params: &BTreeMap<String, ParamKind>) -> Result<TaskTemplate, PlanError> {
        let (name, _) = self.ident("task name")?;
        let mut inputs = Vec::new();
        let mut length: Option<Expr> = None;
        let mut output_mb: Option<f64> = None;
        loop {
            let (word, line) = self.ident("`input`, `length`, `output` or `endtask`")?;
            match word.as_str() {
                "endtask" => break,
                "input" => {
                    let t = self.bump();
                    let Tok::Str(pattern) = t.tok else {
                        return Err(syntax(t.line, "expected a quoted file name"));
                    };
                    let segs = placeholders(&pattern).map_err(|m| syntax(line, m))?;
                    for s in segs {
                        if let Segment::Param(p) = s {
                            if !params.contains_key(p) {
                                return Err(PlanError::UndeclaredPlaceholder { line, name: p.to_string() });
                            }
                        }
                    }
                    let (size_mb, _, _) = self.number()?;
                    if size_mb <= 0.0 {
                        return Err(syntax(line, "input size must be positive"));
                    }
                    self.end_of_statement()?;
                    inputs.push(InputTemplate { pattern, size_mb });
                }
                "length" => {
                    if length.is_some() {
                        return Err(syntax(line, "`length` given twice"));
                    }
                    let e = self.expr()?;
                    let mut used = Vec::new();
                    e.params(&mut used);
                    for p in used {
                        match params.get(&p) {
                            None => return Err(PlanError::UndeclaredPlaceholder { line, name: p }),
                            Some(ParamKind::Text) => {
                                return Err(syntax(line, format!("text parameter `{p}` used in arithmetic")))
                            }
                            Some(_) => {}
                        }
                    }
                    self.end_of_statement()?;
                    length = Some(e);
                }
                "output" => {
                    let (v, _, _) = self.number()?;
                    if v < 0.0 {
                        return Err(syntax(line, "output size must be non-negative"));
                    }
                    self.end_of_statement()?;
                    output_mb = Some(v);
                }
                other => return Err(syntax(line, format!("unknown task statement `{other}`"))),
            }
        }
        let Some(length_mi) = length else {
            return Err(syntax(self.peek().line, format!("task `{name}` has no `length`")));
        };
        Ok(TaskTemplate {
            name,
            inputs,
            length_mi,
            output_mb: output_mb.unwrap_or(0.0),
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num { value, .. } => format!("number {value}"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::Semi => "`;`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Op(op) => format!("`{}`", op.symbol()),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of file".into(),
    }
}

/// Parses plan text. Errors carry the 1-based line they were found on.
pub fn parse_plan(text: &str) -> Result<Plan, PlanError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut parameters: Vec<Parameter> = Vec::new();
    let mut kinds = BTreeMap::new();
    let mut task = None;
    loop {
        let t = p.significant();
        match t.tok {
            Tok::Eof => break,
            Tok::Ident(ref w) if w == "parameter" => {
                let param = p.parameter(t.line)?;
                if kinds.insert(param.name.clone(), param.kind).is_some() {
                    return Err(PlanError::DuplicateParameter { line: t.line, name: param.name });
                }
                parameters.push(param);
            }
            Tok::Ident(ref w) if w == "task" => {
                if task.is_some() {
                    return Err(syntax(t.line, "only one task may be declared"));
                }
                task = Some(p.task(&kinds)?);
            }
            other => return Err(syntax(t.line, format!("expected `parameter` or `task`, found {}", describe(&other)))),
        }
    }
    let task = task.ok_or_else(|| syntax(p.peek().line, "plan declares no task"))?;
    Ok(Plan { parameters, task })
}
