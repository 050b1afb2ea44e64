use serde::{Deserialize, Serialize};

use super::{SolveError, SolveRequest, SolveResult, Solver};
use crate::qubo::{decode_solution, Assignment, VariableMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackOutcome {
    pub assignment: Assignment,
    pub fallback_used: bool,
    /// The raw solver answer when there was one, even if it was rejected.
    pub result: Option<SolveResult>,
    /// Why the fallback was taken.
    pub error: Option<String>,
}

/// Runs `solver` and decodes its sample; any error or infeasible decode
/// yields `fallback` instead. Never fails.
pub fn solve_with_fallback(
    solver: &dyn Solver,
    req: &SolveRequest,
    varmap: &VariableMap,
    fallback: &Assignment,
) -> FallbackOutcome {
    let fall = |result: Option<SolveResult>, why: String| FallbackOutcome {
        assignment: fallback.clone(),
        fallback_used: true,
        result,
        error: Some(why),
    };
    let result = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solver.solve(req))) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return fall(None, e.to_string()),
        Err(_) => return fall(None, SolveError::Remote("solver panicked".into()).to_string()),
    };
    if result.sample.len() != varmap.len() {
        return fall(Some(result), "sample length does not match the variable map".into());
    }
    let assignment = decode_solution(&result.sample, varmap, &req.bqm);
    if !assignment.feasible {
        return fall(Some(result), "solver returned an infeasible sample".into());
    }
    FallbackOutcome { assignment, fallback_used: false, result: Some(result), error: None }
}
