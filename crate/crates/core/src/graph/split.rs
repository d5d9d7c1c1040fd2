use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train/test partition of `0..n` induced by a permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub m: usize,
    pub u: usize,
    /// Sorted ascending.
    pub train: Vec<usize>,
    /// Sorted ascending.
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Split {
    /// Builds a split from explicit index sets over `0..n`, validating the partition.
    pub fn from_indices(n: usize, mut train: Vec<usize>, mut test: Vec<usize>, seed: u64) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidArgument("split sides must be nonempty".into()));
        }
        if train.len() + test.len() != n {
            return Err(Error::InvalidArgument(format!(
                "split sizes {} + {} do not cover {n} nodes",
                train.len(),
                test.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(test.iter()) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("index {i} repeated or out of range")));
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            m: train.len(),
            u: test.len(),
            train,
            test,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.m + self.u
    }

    /// Membership mask: `true` for train nodes.
    pub fn train_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        for &i in &self.train {
            mask[i] = true;
        }
        mask
    }
}

/// Seeded Fisher-Yates shuffle of `items`; returns `(first m, rest)`, each sorted.
///
/// The swap sequence is fixed: for `i` from `len-1` down to `1`, swap `i` with a
/// uniform `j` in `0..=i` drawn from ChaCha8 seeded with `seed`.
pub fn shuffle_partition(items: &[usize], m: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = items.to_vec();
    for i in (1..perm.len()).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let mut rest = perm.split_off(m.min(perm.len()));
    perm.sort_unstable();
    rest.sort_unstable();
    (perm, rest)
}

/// Uniform random split of `0..n` with `floor(train_fraction * n)` training nodes.
pub fn sample_split(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let m = (train_fraction * n as f64).floor() as usize;
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} of {n} nodes leaves an empty side"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let (train, test) = shuffle_partition(&all, m, seed);
    Ok(Split {
        m,
        u: n - m,
        train,
        test,
        seed,
    })
}

/// Child seed for grid coordinates `path` under `base`: a splitmix64 finalizer
/// folded over the coordinates, so seeds for distinct coordinates are independent
/// of which other coordinates exist.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(base), |acc, &c| mix(acc ^ mix(c.wrapping_add(1))))
}

/// `count` independent uniform splits of `0..n` with exactly `m` train nodes.
pub fn sample_permutations(n: usize, m: usize, count: usize, seed: u64) -> Result<Vec<Split>> {
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(format!("cannot split {n} nodes with {m} on the train side")));
    }
    let all: Vec<usize> = (0..n).collect();
    Ok((0..count)
        .map(|t| {
            let s = derive_seed(seed, &[t as u64]);
            let (train, test) = shuffle_partition(&all, m, s);
            Split { m, u: n - m, train, test, seed: s }
        })
        .collect())
}

/// Every split of `0..n` with `m` train nodes, in lexicographic order of the train set.
pub fn enumerate_splits(n: usize, m: usize) -> Vec<Split> {
    let mut out = Vec::new();
    if m == 0 || m >= n {
        return out;
    }
    let mut comb: Vec<usize> = (0..m).collect();
    loop {
        let mut in_train = vec![false; n];
        for &i in &comb {
            in_train[i] = true;
        }
        let test = (0..n).filter(|&i| !in_train[i]).collect();
        out.push(Split { m, u: n - m, train: comb.clone(), test, seed: 0 });
        let Some(k) = (0..m).rev().find(|&k| comb[k] < n - m + k) else {
            break;
        };
        comb[k] += 1;
        for l in k + 1..m {
            comb[l] = comb[l - 1] + 1;
        }
    }
    out
}
