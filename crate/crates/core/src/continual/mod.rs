// SPDX-License-Identifier: Apache-2.0

//! Task streams, replay memory, method objectives and the training loop.

pub mod buffer;
pub mod losses;
pub mod method;
pub mod stream;
pub mod trainer;

pub use buffer::*;
pub use losses::*;
pub use method::*;
pub use stream::*;
pub use trainer::*;
