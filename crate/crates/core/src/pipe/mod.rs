//! Binary streaming between the platform and user-logic processes.

pub mod frame;
pub mod process;

pub use frame::{
    decode_stream, encode_stream, encode_to_vec, read_stream, Frame, FrameError, FrameReader,
    FrameWriter,
};
pub use process::{run_user_logic, PipeError, UserLogicOutput, UserLogicSpec, TASK_ID_ENV};
