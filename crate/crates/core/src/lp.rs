//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as `maximize cᵀx subject to Mx ≤ b`, where each
//! variable is either nonnegative or free. Free variables are split into
//! positive and negative parts. The solver equilibrates rows and columns,
//! runs phase 1 on artificial variables for rows with negative right-hand
//! side, then phase 2 on the true objective. Bland's rule (lowest index for
//! both entering and leaving variable) guarantees termination on degenerate
//! problems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute pivot tolerance on the equilibrated tableau.
pub const PIVOT_TOL: f64 = 1e-9;
pub const MAX_VARS: usize = 128;
pub const MAX_CONSTRAINTS: usize = 512;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("problem too large: {vars} variables, {constraints} constraints")]
    TooLarge { vars: usize, constraints: usize },
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
}

/// `maximize cᵀx  s.t.  Mx ≤ b`, with `x_i ≥ 0` where `nonneg_mask[i]` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub nonneg_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

impl LpProblem {
    /// Empty problem with the given objective; all variables nonnegative
    /// unless changed through [`LpProblem::set_free`].
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            num_vars: n,
            objective,
            ineq_matrix: Vec::new(),
            ineq_rhs: Vec::new(),
            nonneg_mask: vec![true; n],
        }
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.nonneg_mask[var] = false;
        self
    }

    /// Adds `row · x ≤ rhs`.
    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.ineq_matrix.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    /// Adds `row · x ≥ rhs`, stored negated.
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn num_constraints(&self) -> usize {
        self.ineq_rhs.len()
    }

    /// Largest violation of `Mx ≤ b` and of the sign constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, b) in self.ineq_matrix.iter().zip(&self.ineq_rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(lhs - b);
        }
        for (v, nn) in x.iter().zip(&self.nonneg_mask) {
            if *nn {
                worst = worst.max(-v);
            }
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        if self.objective.len() != n || self.nonneg_mask.len() != n {
            return Err(LpError::Shape(format!(
                "num_vars {n}, objective {}, nonneg_mask {}",
                self.objective.len(),
                self.nonneg_mask.len()
            )));
        }
        if self.ineq_matrix.len() != self.ineq_rhs.len() {
            return Err(LpError::Shape(format!(
                "{} constraint rows but {} right-hand sides",
                self.ineq_matrix.len(),
                self.ineq_rhs.len()
            )));
        }
        if let Some(i) = self.ineq_matrix.iter().position(|r| r.len() != n) {
            return Err(LpError::Shape(format!("constraint row {i} has wrong length")));
        }
        if n > MAX_VARS || self.num_constraints() > MAX_CONSTRAINTS {
            return Err(LpError::TooLarge {
                vars: n,
                constraints: self.num_constraints(),
            });
        }
        if !self.objective.iter().all(|v| v.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        if !self.ineq_rhs.iter().all(|v| v.is_finite()) {
            return Err(LpError::NonFinite("ineq_rhs"));
        }
        if !self.ineq_matrix.iter().flatten().all(|v| v.is_finite()) {
            return Err(LpError::NonFinite("ineq_matrix"));
        }
        Ok(())
    }
}

fn inv_max_abs(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m > 0.0 {
        1.0 / m
    } else {
        1.0
    }
}

struct Tableau {
    m: usize,
    width: usize,
    cells: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * (self.width + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.cells[i * (self.width + 1) + self.width]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let stride = self.width + 1;
        let p = self.at(row, col);
        for v in &mut self.cells[row * stride..(row + 1) * stride] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.cells[row * stride..(row + 1) * stride].to_vec();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.at(i, col);
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.cells[i * stride..(i + 1) * stride].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cells[i * stride + col] = 0.0;
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Maximizes `cost · z` over the current basis, entering only columns
    /// with `allowed[j]`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<Outcome, LpError> {
        loop {
            if self.iterations > MAX_ITERATIONS {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            let mut is_basic = vec![false; self.width];
            for &b in &self.basis {
                is_basic[b] = true;
            }
            let entering = (0..self.width).find(|&j| {
                if !allowed[j] || is_basic[j] {
                    return false;
                }
                let mut r = cost[j];
                for i in 0..self.m {
                    r -= cost[self.basis[i]] * self.at(i, j);
                }
                r > PIVOT_TOL
            });
            let Some(col) = entering else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, col);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((bi, best)) => {
                        let tie = 1e-12 * (1.0 + best.abs());
                        if ratio < best - tie || (ratio <= best + tie && self.basis[i] < self.basis[bi]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return Ok(Outcome::Unbounded),
            }
        }
    }
}

/// Solves the problem to optimality or reports infeasibility/unboundedness.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars;
    let m = problem.num_constraints();

    let row_scale: Vec<f64> = problem
        .ineq_matrix
        .iter()
        .map(|r| inv_max_abs(r.iter().copied()))
        .collect();
    let col_scale: Vec<f64> = (0..n)
        .map(|j| inv_max_abs((0..m).map(|i| problem.ineq_matrix[i][j] * row_scale[i])))
        .collect();
    let obj_scale = inv_max_abs((0..n).map(|j| problem.objective[j] * col_scale[j]));

    // Standard-form structural columns: (original var, sign).
    let mut structural: Vec<(usize, f64)> = Vec::with_capacity(2 * n);
    for j in 0..n {
        structural.push((j, 1.0));
        if !problem.nonneg_mask[j] {
            structural.push((j, -1.0));
        }
    }
    let ns = structural.len();
    let rhs: Vec<f64> = (0..m).map(|i| problem.ineq_rhs[i] * row_scale[i]).collect();
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| rhs[i] < 0.0).collect();
    let na = artificial_rows.len();
    let width = ns + m + na;

    let mut tab = Tableau {
        m,
        width,
        cells: vec![0.0; m * (width + 1)],
        basis: vec![0; m],
        iterations: 0,
    };
    let stride = width + 1;
    for i in 0..m {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for (c, &(j, s)) in structural.iter().enumerate() {
            tab.cells[i * stride + c] = sign * s * problem.ineq_matrix[i][j] * row_scale[i] * col_scale[j];
        }
        tab.cells[i * stride + ns + i] = sign;
        tab.cells[i * stride + width] = sign * rhs[i];
        tab.basis[i] = ns + i;
    }
    for (a, &i) in artificial_rows.iter().enumerate() {
        tab.cells[i * stride + ns + m + a] = 1.0;
        tab.basis[i] = ns + m + a;
    }

    if na > 0 {
        let mut cost = vec![0.0; width];
        for c in &mut cost[ns + m..] {
            *c = -1.0;
        }
        let allowed = vec![true; width];
        // Phase 1 is bounded by construction (objective ≤ 0).
        tab.optimize(&cost, &allowed)?;
        let residual: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= ns + m)
            .map(|i| tab.rhs(i))
            .sum();
        let scale = rhs.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if residual > PIVOT_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective_value: f64::NAN,
            });
        }
        // Drive remaining zero-level artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] < ns + m {
                continue;
            }
            if let Some(col) = (0..ns + m).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                tab.pivot(i, col);
            }
        }
    }

    let mut cost = vec![0.0; width];
    for (c, &(j, s)) in structural.iter().enumerate() {
        cost[c] = s * problem.objective[j] * col_scale[j] * obj_scale;
    }
    let mut allowed = vec![true; width];
    for a in &mut allowed[ns + m..] {
        *a = false;
    }
    if let Outcome::Unbounded = tab.optimize(&cost, &allowed)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective_value: f64::INFINITY,
        });
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        let col = tab.basis[i];
        if col < ns {
            let (j, s) = structural[col];
            x[j] += s * tab.rhs(i) * col_scale[j];
        }
    }
    for (v, nn) in x.iter_mut().zip(&problem.nonneg_mask) {
        if *nn && *v < 0.0 {
            *v = 0.0;
        }
    }
    let objective_value = problem.objective_at(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
    })
}
