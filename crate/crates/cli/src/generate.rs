//! Synthetic IR corpora.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use programl_core::synth::{ladder_program, loop_nest_program, random_cfg_program, structured_program, SynthConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProgramKind {
    /// Small structured programs with branches, loops, memory and calls.
    Structured,
    /// One function over an arbitrary control-flow graph.
    RandomCfg,
    /// Nested counted loops, depth cycling from 0 upwards.
    LoopNest,
    /// Back-edge ladders whose rung count, and with it the loop
    /// connectedness, cycles from 0 to 47.
    Ladder,
}

pub fn program(kind: ProgramKind, index: usize, rng: &mut ChaCha8Rng) -> String {
    match kind {
        ProgramKind::Structured => structured_program(rng, &SynthConfig::default()),
        ProgramKind::RandomCfg => random_cfg_program(rng, 2 + index % 7, 3),
        ProgramKind::LoopNest => loop_nest_program(index % 40),
        ProgramKind::Ladder => ladder_program(index % 48),
    }
}

/// Write `count` programs as `prog_NNNNN.ll`. The same seed always yields
/// the same files.
pub fn generate_corpus(dir: &Path, count: usize, seed: u64, kind: ProgramKind) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = count.saturating_sub(1).to_string().len().max(5);
    (0..count)
        .map(|i| {
            let path = dir.join(format!("prog_{i:0width$}.ll"));
            std::fs::write(&path, program(kind, i, &mut rng))?;
            Ok(path)
        })
        .collect()
}
