use std::collections::HashMap;
use std::fmt;

use super::{BinOp, Expr, LoopAst, ScalarType, Statement, TripCount};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Float(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(s) | Tok::Float(s) => write!(f, "number `{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const SYMBOLS: [&str; 18] = [
    "<=", ">=", "==", "!=", "<", ">", "{", "}", "(", ")", "[", "]", ";", "=", "+", "-", "*", "/",
];

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let at = |tok| Token {
                tok,
                line: line_idx + 1,
                column,
            };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(at(Tok::Ident(chars[start..i].iter().collect())));
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if i < chars.len() && chars[i] == '.' {
                    is_float = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                tokens.push(at(if is_float {
                    Tok::Float(text)
                } else {
                    Tok::Int(text)
                }));
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(sym) => {
                    tokens.push(at(Tok::Sym(sym)));
                    i += sym.len();
                }
                None => {
                    return Err(ParseError {
                        line: line_idx + 1,
                        column,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        }
    }
    let line = text.lines().count().max(1);
    let column = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(tokens)
}

fn declaration_type(keyword: &str) -> Option<ScalarType> {
    match keyword {
        "iassign" | "ivar" => Some(ScalarType::Int),
        "fassign" | "fvar" => Some(ScalarType::Float),
        _ => None,
    }
}

/// Collects the type of every identifier introduced by `ivar`/`fvar`/`iassign`/`fassign`.
/// An identifier declared with both types is rejected.
fn collect_declarations(tokens: &[Token]) -> Result<HashMap<String, ScalarType>, ParseError> {
    let mut types = HashMap::new();
    for pair in tokens.windows(2) {
        let (Tok::Ident(kw), Tok::Ident(name)) = (&pair[0].tok, &pair[1].tok) else {
            continue;
        };
        let Some(ty) = declaration_type(kw) else {
            continue;
        };
        match types.insert(name.clone(), ty) {
            Some(prev) if prev != ty => {
                return Err(ParseError {
                    line: pair[1].line,
                    column: pair[1].column,
                    message: format!("`{name}` declared as both int and float"),
                })
            }
            _ => {}
        }
    }
    Ok(types)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    types: HashMap<String, ScalarType>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, token: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            line: token.line,
            column: token.column,
            message: message.into(),
        }
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<(), ParseError> {
        let t = self.advance();
        if t.tok == Tok::Sym(sym) {
            Ok(())
        } else {
            Err(self.error_at(&t, format!("expected `{sym}`, found {}", t.tok)))
        }
    }

    fn check_sym(&self, sym: &'static str) -> bool {
        self.peek().tok == Tok::Sym(sym)
    }

    fn check_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.advance();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(()),
            other => Err(self.error_at(&t, format!("expected `{kw}`, found {other}"))),
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        let t = self.advance();
        match t.tok {
            Tok::Ident(s) => Ok(s),
            ref other => Err(self.error_at(&t, format!("expected identifier, found {other}"))),
        }
    }

    fn trip_literal(&self, t: &Token, text: &str) -> Result<u64, ParseError> {
        let n: u64 = text
            .parse()
            .map_err(|_| self.error_at(t, format!("trip count `{text}` out of range")))?;
        if n == 0 {
            return Err(self.error_at(t, "trip count must be at least 1"));
        }
        Ok(n)
    }

    fn parse_loopspec(&mut self) -> Result<LoopAst, ParseError> {
        self.expect_keyword("loop")?;
        let t = self.advance();
        let trip_count = match &t.tok {
            Tok::Int(text) => TripCount::Literal(self.trip_literal(&t, text)?),
            Tok::Ident(s) if s == "N" => TripCount::Symbolic,
            other => return Err(self.error_at(&t, format!("expected trip count, found {other}"))),
        };
        let body = self.parse_block()?;
        let t = self.peek().clone();
        if t.tok != Tok::Eof {
            return Err(self.error_at(&t, format!("unexpected {} after loop body", t.tok)));
        }
        Ok(LoopAst { trip_count, body })
    }

    fn parse_block(&mut self) -> Result<Vec<Statement>, ParseError> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        while !self.check_sym("}") {
            if self.peek().tok == Tok::Eof {
                let t = self.peek().clone();
                return Err(self.error_at(&t, "unterminated block, expected `}`"));
            }
            stmts.push(self.parse_stmt()?);
        }
        self.expect_sym("}")?;
        Ok(stmts)
    }

    fn parse_stmt(&mut self) -> Result<Statement, ParseError> {
        let t = self.advance();
        let kw = match &t.tok {
            Tok::Ident(s) => s.clone(),
            other => return Err(self.error_at(&t, format!("expected statement, found {other}"))),
        };
        match kw.as_str() {
            "iassign" | "fassign" => {
                let lhs_type = declaration_type(&kw).expect("assignment keyword");
                let lhs_var = self.expect_ident()?;
                self.expect_sym("=")?;
                let rhs = self.parse_expr(lhs_type)?;
                self.expect_sym(";")?;
                Ok(Statement::Assign {
                    lhs_var,
                    lhs_type,
                    rhs,
                })
            }
            "ivar" | "fvar" => {
                let scalar_type = declaration_type(&kw).expect("declaration keyword");
                let var = self.expect_ident()?;
                self.expect_sym(";")?;
                Ok(Statement::Decl { var, scalar_type })
            }
            "call" => {
                let name = self.expect_ident()?;
                self.expect_sym(";")?;
                Ok(Statement::Call { name })
            }
            "if" => {
                self.expect_sym("(")?;
                let cond = self.parse_expr(ScalarType::Int)?;
                self.expect_sym(")")?;
                let then_body = self.parse_block()?;
                let else_body = if self.check_keyword("else") {
                    self.advance();
                    self.parse_block()?
                } else {
                    Vec::new()
                };
                Ok(Statement::If {
                    cond,
                    then_body,
                    else_body,
                })
            }
            "loop" => {
                let t = self.advance();
                let trip_count = match &t.tok {
                    Tok::Int(text) => self.trip_literal(&t, text)?,
                    Tok::Ident(_) => {
                        return Err(
                            self.error_at(&t, "inner loop trip count must be an integer literal")
                        )
                    }
                    other => {
                        return Err(self.error_at(&t, format!("expected trip count, found {other}")))
                    }
                };
                let body = self.parse_block()?;
                Ok(Statement::InnerLoop { trip_count, body })
            }
            other => Err(self.error_at(&t, format!("unknown statement `{other}`"))),
        }
    }

    /// `context` types identifiers that were never declared: float on the
    /// right of `fassign`, int elsewhere. Index expressions are always int.
    fn parse_expr(&mut self, context: ScalarType) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_additive(context)?;
        loop {
            let op = match &self.peek().tok {
                Tok::Sym("<") => BinOp::Lt,
                Tok::Sym("<=") => BinOp::Le,
                Tok::Sym(">") => BinOp::Gt,
                Tok::Sym(">=") => BinOp::Ge,
                Tok::Sym("==") => BinOp::Eq,
                Tok::Sym("!=") => BinOp::Ne,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_additive(context)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_additive(&mut self, context: ScalarType) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term(context)?;
        loop {
            let op = match &self.peek().tok {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_term(context)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_term(&mut self, context: ScalarType) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_primary(context)?;
        loop {
            let op = match &self.peek().tok {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_primary(context)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_primary(&mut self, context: ScalarType) -> Result<Expr, ParseError> {
        let t = self.advance();
        match t.tok {
            Tok::Int(text) => Ok(Expr::Literal {
                text,
                ty: ScalarType::Int,
            }),
            Tok::Float(text) => Ok(Expr::Literal {
                text,
                ty: ScalarType::Float,
            }),
            Tok::Sym("(") => {
                let e = self.parse_expr(context)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let ty = self.types.get(&name).copied().unwrap_or(context);
                if self.check_sym("[") {
                    self.advance();
                    let index = self.parse_expr(ScalarType::Int)?;
                    self.expect_sym("]")?;
                    Ok(Expr::Index {
                        array: name,
                        index: Box::new(index),
                        ty,
                    })
                } else {
                    Ok(Expr::Var { name, ty })
                }
            }
            ref other => Err(self.error_at(&t, format!("expected expression, found {other}"))),
        }
    }
}

/// Parses one loop description.
///
/// Identifiers take the type of their `ivar`/`fvar`/`iassign`/`fassign`
/// declaration anywhere in the text; undeclared names are float on the right
/// of `fassign` and int everywhere else (index expressions, `iassign`,
/// `if` conditions).
pub fn parse_loop_spec(text: &str) -> Result<LoopAst, ParseError> {
    let tokens = tokenize(text)?;
    let types = collect_declarations(&tokens)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        types,
    };
    parser.parse_loopspec()
}
