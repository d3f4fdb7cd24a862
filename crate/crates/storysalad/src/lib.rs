//! Story salads: shuffled mixtures of sentences from two source documents,
//! plus the machinery to pick them apart again.
//!
//! The crate covers the full pipeline:
//!
//! * [`corpus`] — document ingestion, frequency-cut vocabularies, token ids.
//! * [`embedding`] — word-vector tables, average-embedding narratives,
//!   cosine topic similarity.
//! * [`saladgen`] — salad generation with random / group-key / category
//!   pairing policies and hard-set curation by topic similarity.
//! * [`metrics`] — clustering accuracy (max over the two label mappings),
//!   the uniform baseline, Spearman's rho.
//! * [`clustering`] — k-medoids over pairwise distances, both the cosine
//!   baseline distance and the learned classifier distance.
//! * [`neural`] — the sentence-pair classifier: 2-layer BiLSTM encoder,
//!   mutual attention, CNN mixture-context reader, bilinear scoring, with
//!   hand-written reverse-mode gradients, Adam training and a
//!   finite-difference gradient checker.
//! * [`events`] — the event-tuple variant: feedforward event encoder,
//!   co-occurrence pretraining, and the same clustering pipeline.
//! * [`analysis`] — accuracy/topic-similarity correlation reports and
//!   performance-bracket movement tables.
//! * [`synthetic`] — seeded synthetic corpora used by tests, demos and
//!   smoke runs.

pub mod analysis;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod events;
pub mod metrics;
pub mod neural;
pub mod saladgen;
pub mod synthetic;

mod seed;

pub use seed::derive_seed;
