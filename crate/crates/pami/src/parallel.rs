//! Thread-pool adapters for in-process scorers and the segmenter sweep.

use pami_core::scorer::{BatchError, Scorer};
use pami_core::segment::SegmenterConfig;
use pami_core::{Error, Image, ScoreError, ScoreVector, Segmentation, SweepRunner};
use rayon::prelude::*;

/// Scores batches of a thread-safe in-process scorer on the rayon pool.
pub struct ParallelScorer<S>(pub S);

impl<S: Scorer + Sync> Scorer for ParallelScorer<S> {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
        self.0.score(img)
    }

    fn score_batch(&self, imgs: &[Image]) -> Result<Vec<ScoreVector>, BatchError> {
        imgs.par_iter()
            .enumerate()
            .map(|(index, img)| self.0.score(img).map_err(|source| BatchError { index, source }))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

/// Runs segmenter configs concurrently; results keep config order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonSweep;

impl SweepRunner for RayonSweep {
    fn segment_all(&self, img: &Image, cfgs: &[SegmenterConfig]) -> Vec<Result<Segmentation, Error>> {
        cfgs.par_iter().map(|c| c.segment(img)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pami_core::scorer::BlobScorer;
    use pami_core::segment::sweep_configs;
    use pami_core::Sequential;

    #[test]
    fn parallel_matches_sequential() {
        let imgs: Vec<Image> = (0..20)
            .map(|i| {
                let px: Vec<u8> = (0..27).map(|j| ((i * 31 + j * 17) % 256) as u8).collect();
                Image::from_8bit(3, 3, 3, &px).unwrap()
            })
            .collect();
        let s = BlobScorer::new([1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(ParallelScorer(s.clone()).score_batch(&imgs).unwrap(), s.score_batch(&imgs).unwrap());

        let cfgs = sweep_configs(true);
        assert_eq!(RayonSweep.segment_all(&imgs[0], &cfgs), Sequential.segment_all(&imgs[0], &cfgs));
    }
}
