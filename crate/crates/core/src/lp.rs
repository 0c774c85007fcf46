//! Small linear-program abstraction used by the virtual battery, the DFO
//! optimizer and the OPTIMAL oracle.
//!
//! Problems are always minimizations. The simplex itself is delegated to
//! `microlp`; every returned solution is re-checked against the bounds and
//! rows so that numerical trouble surfaces as [`Error::Solver`] instead of a
//! silently wrong answer.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance applied to returned solutions.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective of `values`; NaN unless optimal.
    pub objective: f64,
    /// One value per variable; empty unless optimal.
    pub values: Vec<f64>,
}

impl LpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds a variable with bounds `[lower, upper]` (infinite bounds allowed)
    /// and objective coefficient `cost`.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> VarId {
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        VarId(self.cost.len() - 1)
    }

    /// Adds `sum(coef * var) <relation> rhs`. Repeated variables are merged.
    pub fn add_constraint(&mut self, terms: &[(VarId, f64)], relation: Relation, rhs: f64) {
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for &(v, c) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.constraints.push(Constraint {
            terms: merged,
            relation,
            rhs,
        });
    }

    fn validate(&self) -> Result<()> {
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidLp(format!("variable {i} has bounds [{lo}, {hi}]")));
            }
            if !self.cost[i].is_finite() {
                return Err(Error::InvalidLp(format!("variable {i} has non-finite cost")));
            }
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() || row.terms.iter().any(|(v, c)| !c.is_finite() || v.0 >= self.num_vars()) {
                return Err(Error::InvalidLp(format!("constraint {r} is malformed")));
            }
        }
        Ok(())
    }

    /// Solves the program. Infeasible and unbounded programs are reported
    /// through [`LpStatus`]; malformed input and solver failures are errors.
    pub fn solve(&self) -> Result<LpSolution> {
        self.validate()?;
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..self.num_vars())
            .map(|i| problem.add_var(self.cost[i], (self.lower[i], self.upper[i])))
            .collect();
        for row in &self.constraints {
            let op = match row.relation {
                Relation::Le => ComparisonOp::Le,
                Relation::Eq => ComparisonOp::Eq,
                Relation::Ge => ComparisonOp::Ge,
            };
            let expr: Vec<_> = row.terms.iter().map(|&(v, c)| (vars[v.0], c)).collect();
            problem.add_constraint(expr.as_slice(), op, row.rhs);
        }

        let outcome = match problem.solve() {
            Ok(outcome) => outcome,
            Err(microlp::Error::Infeasible) => {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    objective: f64::NAN,
                    values: Vec::new(),
                })
            }
            Err(microlp::Error::Unbounded) => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    objective: f64::NAN,
                    values: Vec::new(),
                })
            }
            Err(e) => return Err(Error::Solver(e.to_string())),
        };
        let solution = outcome
            .into_solution()
            .map_err(|_| Error::Solver("solve interrupted before a solution was found".into()))?;
        let values: Vec<f64> = vars.iter().map(|&v| solution.var_value_raw(v)).collect();
        self.verify(&values)?;
        let objective = values.iter().zip(&self.cost).map(|(x, c)| x * c).sum();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective,
            values,
        })
    }

    /// Solves and insists on an optimal outcome.
    pub fn solve_optimal(&self, what: &str) -> Result<LpSolution> {
        let sol = self.solve()?;
        match sol.status {
            LpStatus::Optimal => Ok(sol),
            LpStatus::Infeasible => Err(Error::Infeasible(what.to_string())),
            LpStatus::Unbounded => Err(Error::Unbounded(what.to_string())),
        }
    }

    /// Checks `values` against bounds and constraints with the solver tolerance.
    pub fn verify(&self, values: &[f64]) -> Result<()> {
        for (i, &x) in values.iter().enumerate() {
            let tol = FEASIBILITY_TOL * x.abs().max(1.0);
            if !x.is_finite() || x < self.lower[i] - tol || x > self.upper[i] + tol {
                return Err(Error::Solver(format!(
                    "variable {i} = {x} violates bounds [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        for (r, row) in self.constraints.iter().enumerate() {
            let lhs: f64 = row.terms.iter().map(|&(v, c)| c * values[v.0]).sum();
            let scale = row
                .terms
                .iter()
                .map(|&(v, c)| (c * values[v.0]).abs())
                .fold(row.rhs.abs(), f64::max)
                .max(1.0);
            let tol = FEASIBILITY_TOL * scale;
            let ok = match row.relation {
                Relation::Le => lhs <= row.rhs + tol,
                Relation::Ge => lhs >= row.rhs - tol,
                Relation::Eq => (lhs - row.rhs).abs() <= tol,
            };
            if !ok {
                return Err(Error::Solver(format!(
                    "constraint {r} violated: lhs {lhs} vs rhs {} ({:?})",
                    row.rhs, row.relation
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_binds() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_constraint(&[(x, 1.0)], Relation::Ge, 3.0);
        let sol = lp.solve().unwrap();
        assert!(sol.is_optimal());
        assert!((sol.value(x) - 3.0).abs() < 1e-9);
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn maximize_via_negated_cost() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, f64::INFINITY, -1.0);
        lp.add_constraint(&[(x, 1.0)], Relation::Le, 5.0);
        let sol = lp.solve().unwrap();
        assert!((sol.value(x) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_constraint(&[(x, 1.0)], Relation::Le, 0.0);
        lp.add_constraint(&[(x, 1.0)], Relation::Ge, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
        assert!(matches!(lp.solve_optimal("pair"), Err(Error::Infeasible(_))));
    }

    #[test]
    fn unbounded_is_reported() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, f64::INFINITY, -1.0);
        lp.add_constraint(&[(x, 1.0)], Relation::Ge, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn repeated_terms_are_merged() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 10.0, -1.0);
        lp.add_constraint(&[(x, 1.0), (x, 1.0)], Relation::Le, 4.0);
        let sol = lp.solve().unwrap();
        assert!((sol.value(x) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let mut lp = LinearProgram::new();
        lp.add_var(2.0, 1.0, 0.0);
        assert!(matches!(lp.solve(), Err(Error::InvalidLp(_))));
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 1.0, 0.0);
        lp.add_constraint(&[(x, f64::NAN)], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(Error::InvalidLp(_))));
    }

    #[test]
    fn solves_are_reproducible() {
        let build = || {
            let mut lp = LinearProgram::new();
            let vars: Vec<_> = (0..20).map(|i| lp.add_var(0.0, 1.0, ((i * 7) % 5) as f64 - 2.0)).collect();
            let all: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
            lp.add_constraint(&all, Relation::Eq, 6.5);
            lp
        };
        let a = build().solve().unwrap();
        let b = build().solve().unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
