//! Pairwise cosine diagnostics: strided similarity matrix and the mean
//! similarity as a function of frame gap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_stream::FrameFeature;
use crate::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub sampled_frames: usize,
    pub stride: usize,
    /// Mean cosine between consecutive sampled frames.
    pub mean_adjacent: f64,
    /// Mean off-diagonal cosine.
    pub mean_off_diagonal: f64,
    /// One plus the number of consecutive sampled pairs with cosine below 0.5.
    pub estimated_blocks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    /// Frame indices of the sampled rows/columns.
    pub indices: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    /// `(gap in frames, mean cosine, pair count)` over the sampled frames.
    pub decay: Vec<(usize, f64, usize)>,
    pub summary: BlockSummary,
}

pub fn similarity_matrix(frames: &[FrameFeature], stride: usize) -> Result<SimilarityReport> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let indices: Vec<usize> = (0..frames.len()).step_by(stride).collect();
    let n = indices.len();
    let matrix: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| {
            indices
                .iter()
                .map(|&j| vector::cosine(&frames[i].emb, &frames[j].emb))
                .collect()
        })
        .collect();

    let mut decay = Vec::with_capacity(n.saturating_sub(1));
    for gap in 1..n {
        let pairs = n - gap;
        let sum: f64 = (0..pairs).map(|i| matrix[i][i + gap]).sum();
        decay.push((gap * stride, sum / pairs as f64, pairs));
    }

    let mean_adjacent = decay.first().map_or(1.0, |d| d.1);
    let off: usize = n * n.saturating_sub(1);
    let mean_off_diagonal = if off == 0 {
        1.0
    } else {
        matrix
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |(j, _)| *j != i)
                    .map(|(_, v)| *v)
            })
            .sum::<f64>()
            / off as f64
    };
    let estimated_blocks = if n == 0 {
        0
    } else {
        1 + (1..n).filter(|&i| matrix[i - 1][i] < 0.5).count()
    };
    Ok(SimilarityReport {
        indices,
        matrix,
        decay,
        summary: BlockSummary {
            sampled_frames: n,
            stride,
            mean_adjacent,
            mean_off_diagonal,
            estimated_blocks,
        },
    })
}

impl SimilarityReport {
    pub fn write_matrix_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = self.indices.iter().map(|i| format!("f{i}")).collect();
        writeln!(out, "frame,{}", header.join(","))?;
        for (i, row) in self.indices.iter().zip(&self.matrix) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{i},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_decay_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "gap_frames,mean_cos,pairs")?;
        for (gap, mean, pairs) in &self.decay {
            writeln!(out, "{gap},{mean:.6},{pairs}")?;
        }
        Ok(())
    }
}
