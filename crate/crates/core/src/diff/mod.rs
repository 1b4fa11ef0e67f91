//! Dense matrices with reverse-mode gradients.

pub mod nn;
mod tape;
mod tensor;

pub use nn::{glorot, Adam, BoundMlp, GruCell, Linear, Mlp, Parameterized};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{log_col_normalize, log_row_normalize, pairwise_l1};
