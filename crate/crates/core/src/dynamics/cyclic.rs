//! Numerical form of the cyclic fixed point property: once the full
//! recurrent stack maps a state to itself, every rotation of the stack
//! maps the corresponding intermediate state to itself as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_distance, Matrix};
use crate::model::{Looped, StackOp};
use crate::scalar::Scalar;

/// Default tolerance on the shifted residual.
pub const CYCLIC_SHIFT_TOL: f64 = 1e-3;

/// Full-stack residual below which a state counts as a fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-6;

/// Iteration stops once the residual fails to halve over this many cycles.
pub const STALL_WINDOW: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicShiftReport {
    /// Extra full cycles run before the residual test passed or gave up.
    pub iterations: usize,
    /// `||S(X) - X||_F` at the final state.
    pub residual: f64,
    pub reached_fixed_point: bool,
    /// `||S'(Y) - Y||_F` with `Y` the first block's output and `S'` the
    /// stack rotated to start right after that block.
    pub shifted_residual: f64,
    /// `shifted_residual / residual`, an empirical local gain of the first
    /// block on the converged state.
    pub amplification: f64,
    pub tolerance: f64,
    /// True when the fixed point was reached and the shifted residual is
    /// within tolerance; vacuously false otherwise.
    pub holds: bool,
}

/// Iterate the recurrent stack from `state` (the carried state between
/// recurrences) until its residual is at most [`FIXED_POINT_TOL`] or
/// `max_iterations` extra cycles have run (or progress stalls), then test
/// the rotated stack.
pub fn cyclic_shift_check<T: Scalar>(
    model: &Looped<'_, T>,
    state: &Matrix<T>,
    injected: Option<&Matrix<T>>,
    max_iterations: usize,
    tolerance: f64,
) -> Result<CyclicShiftReport> {
    let ops = model.cycle();
    let split = ops
        .iter()
        .position(|&op| op == StackOp::Block(0))
        .ok_or_else(|| Error::Config("recurrent stack has no blocks".into()))?
        + 1;
    let mut x = state.clone();
    let mut next = model.rotated_cycle(&x, 0, injected)?;
    let mut residual = frobenius_distance(&next, &x)?.as_f64();
    let mut iterations = 0;
    let mut history = vec![residual];
    while residual > FIXED_POINT_TOL && iterations < max_iterations {
        x = next;
        next = model.rotated_cycle(&x, 0, injected)?;
        residual = frobenius_distance(&next, &x)?.as_f64();
        iterations += 1;
        history.push(residual);
        // a drifting or oscillating state will not get there; stop early
        if iterations >= STALL_WINDOW && residual > 0.5 * history[iterations - STALL_WINDOW] {
            break;
        }
    }
    let mut y = x.clone();
    for &op in &ops[..split] {
        y = model.apply_op(op, &y, injected)?;
    }
    let shifted = model.rotated_cycle(&y, split, injected)?;
    let shifted_residual = frobenius_distance(&shifted, &y)?.as_f64();
    let reached_fixed_point = residual <= FIXED_POINT_TOL;
    Ok(CyclicShiftReport {
        iterations,
        residual,
        reached_fixed_point,
        shifted_residual,
        amplification: if residual > 0.0 { shifted_residual / residual } else { 0.0 },
        tolerance,
        holds: reached_fixed_point && shifted_residual <= tolerance,
    })
}
