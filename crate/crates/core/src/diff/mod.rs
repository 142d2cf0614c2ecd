//! Minimal reverse-mode differentiation over dense `f64` arrays.

mod array;
mod params;
mod tape;

pub use array::Array;
pub use params::{GradVector, ParamLayout, ParamSpec};
pub use tape::{NodeId, Tape};

use crate::error::Result;

/// A differentiable computation over parameter leaves.
pub trait Graph {
    fn layout(&self) -> &ParamLayout;

    /// Records the computation on `tape` and returns the output node.
    fn build(&self, tape: &mut Tape<'_>, inputs: &[NodeId]) -> Result<NodeId>;
}

/// A finished forward pass: the tape plus its output node.
pub struct Recorded<'p> {
    pub tape: Tape<'p>,
    pub output: NodeId,
}

impl Recorded<'_> {
    pub fn value(&self) -> &Array {
        self.tape.value(self.output)
    }
}

/// Evaluates `graph` on `inputs` with `params`, keeping the tape so the caller
/// can differentiate the output (or any scalar built on top of it).
pub fn forward<'p, G: Graph + ?Sized>(
    graph: &G,
    inputs: &[Array],
    params: &'p GradVector,
) -> Result<Recorded<'p>> {
    let mut tape = Tape::new(params);
    let ids: Vec<NodeId> = inputs.iter().map(|a| tape.constant(a.clone())).collect();
    let output = graph.build(&mut tape, &ids)?;
    Ok(Recorded { tape, output })
}

/// Gradient of the scalar `root` on `tape`, scaled by `seed`.
pub fn backward(tape: &Tape<'_>, root: NodeId, seed: f64) -> Result<GradVector> {
    tape.backward(root, seed)
}
