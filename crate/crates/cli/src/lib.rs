// SPDX-License-Identifier: MIT OR Apache-2.0

//! Configuration and pipeline driver behind the `tsmem` binary.

pub mod config;
pub mod pipeline;
