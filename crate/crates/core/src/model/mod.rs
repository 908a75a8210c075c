//! The learned velocity field: a dense network with exact reverse-mode
//! gradients, an Adam optimiser, and text checkpoints.

mod checkpoint;
mod network;
mod optim;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use network::{time_features, Activation, ArchMeta, LayerSlot, VelocityModel, TIME_FEATURES};
pub use optim::{AdamConfig, OptimiserState};

use crate::error::{Error, Result};
use crate::train::CouplingBatch;

use network::Trace;

fn check_batch(model: &VelocityModel, batch: &CouplingBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must be non-empty"));
    }
    if batch.action_dim() != model.action_dim() || batch.obs_dim() != model.obs_dim() {
        return Err(Error::invalid(format!(
            "batch dims (action {}, obs {}) do not match model (action {}, obs {})",
            batch.action_dim(),
            batch.obs_dim(),
            model.action_dim(),
            model.obs_dim()
        )));
    }
    Ok(())
}

/// Batch-mean squared L2 residual `mean_i |v(at_i, t_i, o_i) - target_i|^2`.
pub fn batch_loss(model: &VelocityModel, batch: &CouplingBatch) -> Result<f64> {
    check_batch(model, batch)?;
    let mut out = vec![0.0; model.action_dim()];
    let mut total = 0.0;
    for i in 0..batch.len() {
        model.eval_into(batch.at(i), batch.t()[i], batch.obs(i), &mut out);
        total += out
            .iter()
            .zip(batch.target_v(i))
            .map(|(y, z)| (y - z) * (y - z))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(model: &VelocityModel, batch: &CouplingBatch) -> Result<(f64, Vec<f64>)> {
    check_batch(model, batch)?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut trace = Trace::default();
    let mut upstream = vec![0.0; model.action_dim()];
    let mut total = 0.0;
    for i in 0..batch.len() {
        model.forward_trace(batch.at(i), batch.t()[i], batch.obs(i), &mut trace);
        let out = trace.acts.last().expect("at least one layer");
        for ((u, y), z) in upstream.iter_mut().zip(out).zip(batch.target_v(i)) {
            let r = y - z;
            total += r * r;
            *u = 2.0 * r / n;
        }
        model.backward(&trace, &upstream, &mut grad);
    }
    Ok((total / n, grad))
}

/// One Adam step on the flow-matching regression loss.
///
/// Returns the loss measured before the update. If the loss, gradient, or the
/// proposed parameters/moments are non-finite, nothing is modified and a
/// [`Error::TrainingDiverged`] carrying the would-be step index is returned.
pub fn train_step(
    model: &mut VelocityModel,
    opt: &mut OptimiserState,
    batch: &CouplingBatch,
) -> Result<f64> {
    if opt.first_moment.len() != model.num_params() {
        return Err(Error::invalid("optimiser state does not match model size"));
    }
    let step = opt.step_count + 1;
    let (loss, grad) = loss_and_grad(model, batch)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged {
            step,
            reason: format!("loss = {loss}"),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged {
            step,
            reason: "non-finite gradient".into(),
        });
    }
    let (params, m, v) = opt.propose(model.params(), &grad);
    if params.iter().chain(&m).chain(&v).any(|x| !x.is_finite()) {
        return Err(Error::TrainingDiverged {
            step,
            reason: "non-finite parameters after update".into(),
        });
    }
    model.params_mut().copy_from_slice(&params);
    opt.first_moment = m;
    opt.second_moment = v;
    opt.step_count = step;
    Ok(loss)
}
