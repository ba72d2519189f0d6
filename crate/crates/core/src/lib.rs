//! Road / non-road segmentation from calibrated monocular video, learned
//! without manual labels.
//!
//! The training signal comes from two places:
//!
//! * **Geometry.** A calibrated camera rig plus the car's own footprint give
//!   two regions whose labels are known for free: a small patch of road right
//!   in front of the car (the car is driving on it) and everything above the
//!   horizon (no road up there). [`weakmask`] rasterizes these into partial
//!   masks with a large IGNORE region in between; [`losses::geometric_loss`]
//!   turns them into a masked binary cross-entropy.
//! * **Temporal consistency.** Sparse points tracked between frame pairs
//!   ([`tracker`]) should keep their predicted label while the world moves
//!   under the car. [`losses::iic_loss`] rewards agreement through the mutual
//!   information of the empirical joint label distribution, which cannot be
//!   gamed by collapsing to a single class.
//!
//! [`pipeline`] wires both into the two-phase training loop (geometric
//! pretraining, then joint training with hard-pair mining), [`net`] is the
//! small fully-convolutional model with hand-rolled exact gradients, and
//! [`synthworld`] renders deterministic synthetic driving sequences with
//! analytic ground truth so the whole system can be exercised end to end at
//! desk scale.
//!
//! Everything here is deliberately deterministic: seeded RNG throughout,
//! fixed summation orders, and data-parallel kernels that write disjoint
//! output slots, so a run with the same seed reproduces checkpoints and logs
//! bit for bit.

pub mod geometry;
pub mod img;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod synthworld;
pub mod tracker;
pub mod weakmask;

/// Runs `f` inside a rayon pool with exactly `threads` workers.
///
/// Parallel kernels in this crate only ever split work into disjoint output
/// slots, so results are identical for any thread count; the knob exists so
/// callers can pin resource usage (the CLI defaults to 1).
pub fn with_thread_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("failed to build thread pool")
        .install(f)
}
