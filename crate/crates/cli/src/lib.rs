//! Command-line driver and HTTP session service for progressive DNA image
//! retrieval. The binary lives in `main.rs`; [`service`] is exposed so the
//! router can be embedded and tested without a socket.

pub mod service;
