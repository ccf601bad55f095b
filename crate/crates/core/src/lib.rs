//! Core algorithms for tick-level order-flow factor mining.
//!
//! This crate is `no_std` + `alloc`: everything here is pure computation on
//! in-memory data. File formats, the CLI, and stage orchestration live in the
//! companion `microflow` crate.
//!
//! The pipeline this crate implements:
//!
//! 1. [`lob`] — a limit-order-book state machine that replays tick-level
//!    order flow into books and transactions.
//! 2. [`segment`] — splits a trading day into fixed-length windows and
//!    derives per-window accumulated books and fixed-grid volume vectors.
//! 3. [`numerics`] — a small dense-tensor engine with reverse-mode autodiff
//!    and Adam, used by all neural components.
//! 4. [`context`] — twin recurrent generators that predict the next window's
//!    book; the prediction error is part of each window's context feature.
//! 5. [`extractor`] — causal, context-conditioned multi-head attention over a
//!    window's transactions, producing one feature vector per window.
//! 6. [`svdd`] — a soft-boundary hypersphere objective whose distance from
//!    center ranks windows by uniqueness; the top fraction become factors.
//! 7. [`baselines`] — rule-based intraday selectors used for comparison.
//! 8. [`eval`] — IC / Rank IC / Rank IR / PA / GLR metrics, daily labels, a
//!    ridge prediction head, and a simple factor-driven execution policy.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod config;
pub mod context;
pub mod data;
pub mod eval;
pub mod extractor;
pub mod hash;
pub mod lob;
pub mod numerics;
pub mod rng;
pub mod segment;
pub mod svdd;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

mod fmath;
