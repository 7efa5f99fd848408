//! Command line front end for `sgne-core`: the embed-then-reduce pipeline
//! with scoring and artifacts, a timing harness and an SVG renderer.

pub mod bench;
pub mod config;
pub mod pipeline;
pub mod render;

/// Process exit status for a failure of the core library: 3 for numerical
/// failures, 2 for everything else (bad or unreadable data).
pub fn exit_code(e: &sgne_core::Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}
