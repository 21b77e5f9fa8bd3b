//! Loop description language and static feature extraction.
//!
//! A `.loop` file describes the body of one annotated parallel loop:
//!
//! ```text
//! loop N {
//!     fassign c = a[i];          # copy
//!     fassign b = k * c[i];      # scale
//! }
//! ```
//!
//! [`parse_loop_spec`] turns the text into a typed [`LoopAst`] and
//! [`analyze_statement`] counts the per-iteration operation features the
//! models consume. [`make_feature_vector`] joins them with the two runtime
//! values (worker count, range length).

mod analyze;
mod parser;

pub use analyze::{analyze_statement, make_feature_vector, DynamicFeatures, StaticFeatures};
pub use parser::{parse_loop_spec, ParseError};

use std::fmt;

/// Scalar type of a variable, array element or literal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScalarType {
    Int,
    Float,
}

/// Result type of a binary operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueType {
    Int,
    Float,
    Bool,
}

impl From<ScalarType> for ValueType {
    fn from(t: ScalarType) -> Self {
        match t {
            ScalarType::Int => ValueType::Int,
            ScalarType::Float => ValueType::Float,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var {
        name: String,
        ty: ScalarType,
    },
    Index {
        array: String,
        index: Box<Expr>,
        ty: ScalarType,
    },
    Literal {
        text: String,
        ty: ScalarType,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        ty: ValueType,
    },
}

impl Expr {
    /// Builds a binary node, deriving its result type from the operands.
    ///
    /// Comparisons yield `Bool`; arithmetic is `Float` when either side is
    /// `Float` and `Int` otherwise (booleans promote to `Int`).
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        let ty = if op.is_comparison() {
            ValueType::Bool
        } else if lhs.value_type() == ValueType::Float || rhs.value_type() == ValueType::Float {
            ValueType::Float
        } else {
            ValueType::Int
        };
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
            ty,
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Expr::Var { ty, .. } | Expr::Index { ty, .. } | Expr::Literal { ty, .. } => {
                (*ty).into()
            }
            Expr::Binary { ty, .. } => *ty,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Assign {
        lhs_var: String,
        lhs_type: ScalarType,
        rhs: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
    Call {
        name: String,
    },
    /// Inner loops always have a literal trip count, so per-iteration counts
    /// of the outermost loop are static.
    InnerLoop {
        trip_count: u64,
        body: Vec<Statement>,
    },
    Decl {
        var: String,
        scalar_type: ScalarType,
    },
}

/// Trip count of the outermost loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripCount {
    Literal(u64),
    /// Resolved from the range length at dispatch time.
    Symbolic,
}

impl fmt::Display for TripCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TripCount::Literal(n) => write!(f, "{n}"),
            TripCount::Symbolic => f.write_str("N"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopAst {
    pub trip_count: TripCount,
    pub body: Vec<Statement>,
}
