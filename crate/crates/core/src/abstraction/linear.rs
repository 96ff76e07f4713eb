use serde::{Deserialize, Serialize};

/// Values within this distance of a bound count as on it.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// `coeffs · x < rhs` when strict, `coeffs · x <= rhs` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub strict: bool,
}

impl LinearConstraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        LinearConstraint { coeffs, rhs, strict: false }
    }

    pub fn lt(coeffs: Vec<f64>, rhs: f64) -> Self {
        LinearConstraint { coeffs, rhs, strict: true }
    }

    /// `coeffs · x >= rhs`.
    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::le(coeffs.iter().map(|c| -c).collect(), -rhs)
    }

    /// `coeffs · x > rhs`.
    pub fn gt(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::lt(coeffs.iter().map(|c| -c).collect(), -rhs)
    }

    /// The complement region.
    pub fn negated(&self) -> Self {
        LinearConstraint {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            rhs: -self.rhs,
            strict: !self.strict,
        }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
        if self.strict {
            lhs < self.rhs
        } else {
            lhs <= self.rhs
        }
    }
}

/// `x' = matrix · x + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap {
            matrix: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            offset: vec![0.0; n],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, c)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c)
            .collect()
    }

    /// Replaces output `i` by `row · x + c`.
    pub fn set_row(&mut self, i: usize, row: Vec<f64>, c: f64) {
        self.matrix[i] = row;
        self.offset[i] = c;
    }
}

/// One affine branch of a piecewise-affine step function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub guards: Vec<LinearConstraint>,
    pub map: AffineMap,
}

impl Piece {
    pub fn applies(&self, x: &[f64]) -> bool {
        self.guards.iter().all(|g| g.holds(x))
    }
}

// Row of an inequality system over `n` variables.
#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub a: Vec<f64>,
    pub b: f64,
    pub strict: bool,
}

fn scale(x: f64) -> f64 {
    x.abs().max(1.0)
}

/// Fourier–Motzkin feasibility of `{x : a·x (<|<=) b for every row}`.
pub(crate) fn feasible(mut rows: Vec<Row>, n: usize) -> bool {
    for var in 0..n {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for r in rows {
            let c = r.a[var];
            if c.abs() <= 1e-13 {
                let mut r = r;
                r.a[var] = 0.0;
                rest.push(r);
            } else if c > 0.0 {
                pos.push(r);
            } else {
                neg.push(r);
            }
        }
        for p in &pos {
            for q in &neg {
                let (cp, cq) = (p.a[var], -q.a[var]);
                let a: Vec<f64> = p
                    .a
                    .iter()
                    .zip(&q.a)
                    .enumerate()
                    .map(|(i, (x, y))| if i == var { 0.0 } else { x / cp + y / cq })
                    .collect();
                rest.push(Row {
                    a,
                    b: p.b / cp + q.b / cq,
                    strict: p.strict || q.strict,
                });
            }
        }
        rows = rest;
        if rows.is_empty() {
            return true;
        }
    }
    rows.iter().all(|r| {
        if r.strict {
            r.b > FEASIBILITY_TOLERANCE * scale(r.b)
        } else {
            r.b >= -FEASIBILITY_TOLERANCE * scale(r.b)
        }
    })
}
