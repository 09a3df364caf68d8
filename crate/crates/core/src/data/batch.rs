use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, GlyphImage, IdxDataset};

/// One mini-batch: dataset indices plus borrowed images and labels.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub indices: Vec<usize>,
    pub images: Vec<&'a GlyphImage>,
    pub labels: Vec<u8>,
}

/// One epoch over a seeded permutation; the short final batch is dropped.
#[derive(Debug)]
pub struct BatchIter<'a> {
    dataset: &'a IdxDataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl<'a> BatchIter<'a> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len() / self.batch_size
    }
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = Batch<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        let end = self.next + self.batch_size;
        if end > self.order.len() {
            return None;
        }
        let indices = self.order[self.next..end].to_vec();
        self.next = end;
        Some(Batch {
            images: indices.iter().map(|&i| &self.dataset.images()[i]).collect(),
            labels: indices.iter().map(|&i| self.dataset.labels()[i]).collect(),
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.next) / self.batch_size;
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

pub fn make_batches(dataset: &IdxDataset, batch_size: usize, seed: u64) -> Result<BatchIter<'_>, DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if batch_size == 0 || batch_size > dataset.count() {
        return Err(DataError::BatchSize {
            batch_size,
            count: dataset.count(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.count()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(BatchIter {
        dataset,
        order,
        batch_size,
        next: 0,
    })
}
