use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Expr, LoopAst, ScalarType, Statement, ValueType};
use crate::features::FeatureVector;

/// Static features of one iteration of the outermost loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub total_ops: u64,
    pub float_ops: u64,
    pub comparison_ops: u64,
    pub deepest_loop_level: u64,
    pub num_int_vars: u64,
    pub num_float_vars: u64,
    pub num_if: u64,
    pub num_if_inner: u64,
    pub num_calls: u64,
    pub num_calls_inner: u64,
}

/// Values only known when the loop is dispatched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicFeatures {
    pub num_threads: u64,
    pub num_iterations: u64,
}

impl DynamicFeatures {
    /// Both values are clamped to at least 1.
    pub fn new(num_threads: u64, num_iterations: u64) -> Self {
        DynamicFeatures {
            num_threads: num_threads.max(1),
            num_iterations: num_iterations.max(1),
        }
    }
}

#[derive(Default)]
struct Counter {
    features: StaticFeatures,
    int_vars: HashSet<String>,
    float_vars: HashSet<String>,
}

impl Counter {
    fn note_var(&mut self, name: &str, ty: ScalarType) {
        let set = match ty {
            ScalarType::Int => &mut self.int_vars,
            ScalarType::Float => &mut self.float_vars,
        };
        if !set.contains(name) {
            set.insert(name.to_string());
        }
    }

    fn block(&mut self, stmts: &[Statement], weight: u64, depth: u64) {
        for stmt in stmts {
            self.stmt(stmt, weight, depth);
        }
    }

    fn stmt(&mut self, stmt: &Statement, weight: u64, depth: u64) {
        let f = &mut self.features;
        match stmt {
            Statement::Assign {
                lhs_var,
                lhs_type,
                rhs,
            } => {
                f.total_ops = f.total_ops.saturating_add(weight);
                if rhs.value_type() == ValueType::Float {
                    f.float_ops = f.float_ops.saturating_add(weight);
                }
                self.note_var(lhs_var, *lhs_type);
                self.expr(rhs, weight);
            }
            Statement::If {
                cond,
                then_body,
                else_body,
            } => {
                f.num_if += 1;
                if depth > 0 {
                    f.num_if_inner += 1;
                }
                self.expr(cond, weight);
                self.block(then_body, weight, depth);
                self.block(else_body, weight, depth);
            }
            Statement::Call { .. } => {
                f.num_calls += 1;
                if depth > 0 {
                    f.num_calls_inner += 1;
                }
            }
            Statement::InnerLoop { trip_count, body } => {
                f.deepest_loop_level = f.deepest_loop_level.max(depth + 1);
                self.block(body, weight.saturating_mul(*trip_count), depth + 1);
            }
            Statement::Decl { var, scalar_type } => self.note_var(var, *scalar_type),
        }
    }

    fn expr(&mut self, expr: &Expr, weight: u64) {
        match expr {
            Expr::Var { name, ty } => self.note_var(name, *ty),
            Expr::Index { index, .. } => self.expr(index, weight),
            Expr::Literal { .. } => {}
            Expr::Binary { op, lhs, rhs, .. } => {
                let f = &mut self.features;
                f.total_ops = f.total_ops.saturating_add(weight);
                if lhs.value_type() == ValueType::Float || rhs.value_type() == ValueType::Float {
                    f.float_ops = f.float_ops.saturating_add(weight);
                }
                if op.is_comparison() {
                    f.comparison_ops = f.comparison_ops.saturating_add(weight);
                }
                self.expr(lhs, weight);
                self.expr(rhs, weight);
            }
        }
    }
}

/// Counts the static features of one outermost iteration.
///
/// Operation counts (`total`, `float`, `comparison`) are weighted by the
/// product of enclosing inner-loop trip counts. An assignment counts as one
/// operation (the store) and as a float operation when its right-hand side
/// is float-typed. A binary operation is a float operation when either
/// operand is float. `if` bodies count with weight 1 regardless of branch.
///
/// `if` and `call` counts are unweighted; the `_inner` variants count only
/// nodes nested in at least one inner loop. Variable counts are distinct
/// scalar names (declared, assigned or read); arrays are not counted.
pub fn analyze_statement(ast: &LoopAst) -> StaticFeatures {
    let mut counter = Counter::default();
    counter.block(&ast.body, 1, 0);
    let mut features = counter.features;
    features.num_int_vars = counter.int_vars.len() as u64;
    features.num_float_vars = counter.float_vars.len() as u64;
    features
}

/// Joins static and dynamic features into the model input layout
/// `[1, threads, iterations, total_ops, float_ops, comparison_ops, loop_level]`.
pub fn make_feature_vector(s: &StaticFeatures, d: &DynamicFeatures) -> FeatureVector {
    FeatureVector::from_raw([
        d.num_threads as f64,
        d.num_iterations as f64,
        s.total_ops as f64,
        s.float_ops as f64,
        s.comparison_ops as f64,
        s.deepest_loop_level as f64,
    ])
}

impl StaticFeatures {
    /// Full twelve-feature row (dynamic features first), matching
    /// [`crate::features::FULL_FEATURES`].
    pub fn full_row(&self, d: &DynamicFeatures) -> [f64; 12] {
        [
            d.num_threads as f64,
            d.num_iterations as f64,
            self.total_ops as f64,
            self.float_ops as f64,
            self.comparison_ops as f64,
            self.deepest_loop_level as f64,
            self.num_int_vars as f64,
            self.num_float_vars as f64,
            self.num_if as f64,
            self.num_if_inner as f64,
            self.num_calls as f64,
            self.num_calls_inner as f64,
        ]
    }
}
