// SPDX-License-Identifier: MIT OR Apache-2.0

//! Benchmark-only crate; see `benches/kernels.rs`.
