//! Dialect data collection as a game.
//!
//! Contributors rewrite standard-language sentences in their dialect. A
//! character n-gram classifier guesses the dialect and its region on a
//! hexagon map, the contributor confirms or corrects the guess, and every
//! answer grows an append-only corpus. Sentences are offered by difficulty,
//! where difficulty is the summed per-dialect classification entropy of each
//! parallel group, so the game steers players toward the gaps the model is
//! least sure about.
//!
//! | module | role |
//! |---|---|
//! | [`corpus`] | registry, parallel groups, feedback event log |
//! | [`geo`] | hexagon regions, lasso selection, boundaries, admin divisions |
//! | [`classifier`] | hashed n-gram features, softmax classifier, autotune |
//! | [`selection`] | entropy difficulty scores, tiers, next-sentence sampling |
//! | [`game`] | quiz/review/match session state machine |
//! | [`api`] | HTTP facade |
//! | [`sim`] | simulated contributors driving the HTTP API |
//! | [`synth`] | seeded synthetic dialect families for tests and demos |
//! | [`config`], [`cli`] | TOML settings and the `dialingle` command |
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example
//! quiz_session` is a good first stop.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod geo;
pub mod selection;
pub mod api;
pub mod game;
pub mod sim;
pub mod synth;
pub mod text;
