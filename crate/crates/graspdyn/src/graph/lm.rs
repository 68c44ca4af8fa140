//! Levenberg-Marquardt iteration over the factor graph.

use nalgebra::DVector;

use crate::error::{Error, Result};

use super::factors::EvalContext;
use super::linear::NormalEqs;
use super::values::Values;
use super::{FactorGraph, SolverConfig, TerminationReason};

pub struct LmOutcome {
    pub values: Values,
    pub cost_trace: Vec<f64>,
    pub termination: TerminationReason,
    pub accepted_steps: usize,
}

pub fn total_cost(graph: &FactorGraph, values: &Values, ctx: &EvalContext) -> f64 {
    let mut cost = 0.0;
    for f in &graph.factors {
        let locals = f.extract_locals(values, &graph.contact_counts);
        let r = f.residual(&locals, ctx);
        cost += r.norm_squared();
    }
    cost
}

fn linearize(graph: &FactorGraph, values: &Values, ctx: &EvalContext) -> (NormalEqs, f64) {
    let mut eqs = NormalEqs::new(values.poses.len(), &graph.contact_counts);
    let mut cost = 0.0;
    for f in &graph.factors {
        let locals = f.extract_locals(values, &graph.contact_counts);
        let r = f.residual(&locals, ctx);
        cost += r.norm_squared();
        let jac = f.jacobians(&locals, ctx, &r);
        let vars = f.variables(&graph.contact_counts);
        eqs.add_factor(&vars, &jac, &r);
    }
    (eqs, cost)
}

fn apply_solution(values: &Values, sol: &super::linear::Solution) -> Result<Values> {
    let mut out = values.clone();
    for (t, d) in sol.delta_poses.iter().enumerate() {
        out.poses[t] = super::values::retract_pose(&values.poses[t], d.as_slice())?;
    }
    for (t, d) in sol.delta_groups.iter().enumerate() {
        let c = values.forces[t].len();
        if d.len() == 0 {
            continue;
        }
        for i in 0..c {
            let f: DVector<f64> = d.rows(3 * i, 3).into();
            out.forces[t][i] = values.forces[t][i] + crate::se3::Vec3::new(f[0], f[1], f[2]);
            let p: DVector<f64> = d.rows(3 * (c + i), 3).into();
            out.contacts[t][i] = values.contacts[t][i] + crate::se3::Vec3::new(p[0], p[1], p[2]);
        }
    }
    out.inertial =
        super::values::retract_inertial_state(&values.inertial, sol.delta_inertial.as_slice())?;
    Ok(out)
}

/// Run damped Gauss-Newton until the relative cost decrease stalls, the
/// iteration budget runs out, or damping saturates. Accepted steps strictly
/// decrease the cost; the trace records the cost after each accepted step.
pub fn run(
    graph: &FactorGraph,
    config: &SolverConfig,
    init: Values,
    constraint_weight: f64,
) -> Result<LmOutcome> {
    let ctx = EvalContext {
        stamps: &graph.stamps,
        hull: &graph.hull,
        config,
        constraint_weight,
    };

    let mut values = init;
    let mut cost = total_cost(graph, &values, &ctx);
    if !cost.is_finite() {
        return Err(Error::NonFiniteResidual);
    }
    let mut trace = vec![cost];
    let mut lambda = config.initial_lambda;
    let mut accepted = 0usize;

    let termination = 'outer: loop {
        if accepted >= config.max_iterations {
            break TerminationReason::MaxIterations;
        }
        let (eqs, _) = linearize(graph, &values, &ctx);
        // try steps with increasing damping until one is accepted
        loop {
            if lambda > config.max_lambda {
                break 'outer TerminationReason::StalledAtMaxDamping;
            }
            let Some(sol) = eqs.solve(lambda, config.scaled_damping) else {
                lambda *= config.lambda_increase;
                continue;
            };
            let candidate = apply_solution(&values, &sol)?;
            let new_cost = total_cost(graph, &candidate, &ctx);
            if new_cost.is_finite() && new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                values = candidate;
                cost = new_cost;
                trace.push(cost);
                accepted += 1;
                lambda = (lambda / config.lambda_decrease).max(1e-12);
                if rel < config.relative_decrease_tol {
                    break 'outer TerminationReason::Converged;
                }
                break;
            }
            lambda *= config.lambda_increase;
        }
    };

    Ok(LmOutcome {
        values,
        cost_trace: trace,
        termination,
        accepted_steps: accepted,
    })
}
