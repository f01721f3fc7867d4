//! Span-level emotion-cause-category triplet extraction toolkit: corpus
//! model, annotation codecs, prompt rendering, a generation gateway with an
//! offline mock, augmentation filtering, triplet parsing, evaluation metrics
//! and a small LoRA numerics lab.

pub mod annotate;
pub mod augment;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod gateway;
pub mod lora;
pub mod metrics;
pub mod prompts;
