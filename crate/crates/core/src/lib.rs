//! Labeled multi-robot routing on 3D grids with Rubik-table shuffles.

pub mod cli;
pub mod grid;
pub mod instance;
pub mod matching;
pub mod rubik;
pub mod shuffle;
pub mod solver;
pub mod unlabeled;
pub mod validate;
