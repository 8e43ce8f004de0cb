//! Dense network substrate: multilayer perceptrons with exact reverse-mode
//! gradients, the Adam optimizer, and a versioned checkpoint format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub(crate) use mlp::standard;
pub use mlp::{sigmoid, Activation, Dense, DenseGrad, Mlp, MlpCache, MlpGrads};

/// A model built from a fixed, ordered list of networks.
///
/// The order returned by [`Model::networks`] is the order gradients are
/// produced in and the order optimizer state is kept in.
pub trait Model {
    fn networks(&self) -> Vec<&Mlp>;
    fn networks_mut(&mut self) -> Vec<&mut Mlp>;

    fn param_count(&self) -> usize {
        self.networks().iter().map(|m| m.param_count()).sum()
    }

    /// Lengths of every parameter slice, in optimizer order.
    fn param_shapes(&self) -> Vec<usize> {
        self.networks().iter().flat_map(|m| m.param_shapes()).collect()
    }
}

/// Applies one Adam step to every network of `model`.
pub fn opt_step<M: Model + ?Sized>(
    model: &mut M,
    grads: &[MlpGrads],
    opt: &mut Adam,
) -> crate::Result<()> {
    let nets = model.networks_mut();
    if nets.len() != grads.len() {
        return Err(crate::Error::Shape(format!(
            "{} networks but {} gradient sets",
            nets.len(),
            grads.len()
        )));
    }
    let params: Vec<&mut [f64]> = nets.into_iter().flat_map(|m| m.param_slices_mut()).collect();
    let grad_slices: Vec<&[f64]> = grads.iter().flat_map(|g| g.slices()).collect();
    opt.step(params, &grad_slices)
}
