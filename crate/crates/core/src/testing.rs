//! Benchmark models shared by unit tests.

use crate::claims::ClaimLaw;
use crate::model::{ModelSpec, RegimeModel};

/// One state, unit premium, unit arrival rate, Exp(2) claims.
pub fn model_a() -> RegimeModel {
    RegimeModel::single_state(1.0, 1.0, ClaimLaw::exponential(2.0)).unwrap()
}

/// Two symmetric states with premiums (2, 1) and Exp(1) claims at unit rate.
pub fn model_b() -> RegimeModel {
    RegimeModel::new(ModelSpec {
        q_matrix: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        premiums: vec![2.0, 1.0],
        arrival_rates: vec![1.0, 1.0],
        state_claims: vec![Some(ClaimLaw::exponential(1.0)), Some(ClaimLaw::exponential(1.0))],
        transition_claims: vec![],
    })
    .unwrap()
}
