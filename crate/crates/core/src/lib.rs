//! Lesion image synthesis from semantic label maps and superpixel instance
//! maps, a class-conditional progressive GAN baseline, and a harness that
//! measures how much synthetic images help a melanoma classifier.

pub mod cli;
pub mod error;
pub mod evalharness;
pub mod fsutil;
pub mod imaging;
pub mod mapkit;
pub mod objectives;
pub mod proggan;
pub mod synthnet;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
