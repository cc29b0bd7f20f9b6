//! The field network: encoded `(x, d)` to per-point distribution parameters.

mod checkpoint;
mod encoding;
mod network;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use encoding::{encode, encode_into, encode_rows, encoded_width, PositionalEncodingConfig};
pub use network::{
    direction_angles, parameter_count, repeat_rows, DropoutMasks, FieldDistributionParams,
    FieldNetwork, FieldNetworkConfig, FieldOutputs, OUTPUT_WIDTH, RAW_SIGMA_INIT,
};
