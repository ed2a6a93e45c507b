//! End-to-end pipeline for corpus-trained melody generation and style
//! discrimination: parse Standard MIDI Files into note/duration streams,
//! tokenize them into a binary corpus store, train a two-layer LSTM with
//! additive attention and dual softmax heads, sample new pieces, encode
//! pieces into fixed-width Note.Duration feature rows, and score generated
//! pieces against the corpus with a linear SVM.
//!
//! Every stage is deterministic given its explicit seed; data-parallel inner
//! loops (batch gradients, evaluation rounds) reduce in a fixed order so the
//! `parallel` feature changes speed, never results.

pub mod cli;
pub mod corpus;
pub mod discriminator;
pub mod features;
pub mod generate;
pub mod midi_io;
pub mod neural;
pub mod par;
pub mod ql;
