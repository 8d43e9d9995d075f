//! Dense tensors, the reverse-mode tape, recurrent primitives and Adam.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod lbfgsb;
pub mod params;
pub mod tensor;

pub use adam::OptimizerState;
pub use gradcheck::{grad_check, grad_check_store, GradCheckReport};
pub use graph::{Grads, Graph, Var};
pub use lbfgsb::{minimize_box, LbfgsbOptions, LbfgsbResult};
pub use params::{Affine, Bound, LstmParams, LstmState, ParamId, ParamStore};
pub use tensor::Tensor;

use crate::error::Result;

/// Inverse of a square matrix (LU with partial pivoting).
pub fn mat_inverse(m: &Tensor) -> Result<Tensor> {
    let (r, c) = m.dims();
    if r != c {
        return Err(crate::error::DsdError::Shape(format!("inverse of non-square {r}x{c}")));
    }
    Ok(Tensor::from_vec(r, r, kernels::invert(m.data(), r)?))
}

/// Runs an LSTM stack over `inputs` with optional initial states and returns
/// the top-layer hidden states.
pub fn lstm_forward(
    inputs: &Tensor,
    store: &ParamStore,
    params: &LstmParams,
    init: Option<&[(Tensor, Tensor)]>,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, false);
    let x = g.constant(inputs.clone());
    let init_vars: Option<Vec<(Var, Var)>> = init.map(|s| {
        s.iter()
            .map(|(h, c)| (g.constant(h.clone()), g.constant(c.clone())))
            .collect()
    });
    let y = params.forward_with_state(&mut g, &bound, x, init_vars.as_deref(), false)?;
    Ok(g.value(y).clone())
}
