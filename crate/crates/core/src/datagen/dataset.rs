use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forcing::ForcingSpec;
use super::grid::Grid;
use super::newton::{solve_forcing, NewtonOptions, SamplePair};
use super::system::SystemSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train = 0,
    Validation = 1,
    Test = 2,
    Extrapolation = 3,
}

impl Split {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Split::Train),
            1 => Some(Split::Validation),
            2 => Some(Split::Test),
            3 => Some(Split::Extrapolation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Extrapolation => "extrapolation",
        }
    }
}

/// Samples of one system on one grid, each with a split label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: SystemSpec,
    pub grid: Grid,
    pub samples: Vec<SamplePair>,
    pub splits: Vec<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub extrapolation: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split(&self, split: Split) -> Vec<&SamplePair> {
        self.indices(split).into_iter().map(|i| &self.samples[i]).collect()
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for s in &self.splits {
            match s {
                Split::Train => c.train += 1,
                Split::Validation => c.validation += 1,
                Split::Test => c.test += 1,
                Split::Extrapolation => c.extrapolation += 1,
            }
        }
        c
    }

    /// Keeps at most `n` training samples, chosen uniformly with `seed`.
    /// Other splits are untouched.
    pub fn subsample_train(&self, n: usize, seed: u64) -> Dataset {
        let mut train = self.indices(Split::Train);
        if train.len() <= n {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        train.shuffle(&mut rng);
        let mut keep = vec![true; self.len()];
        for &i in &train[n..] {
            keep[i] = false;
        }
        let mut out = Dataset { system: self.system, grid: self.grid, samples: Vec::new(), splits: Vec::new() };
        for (i, k) in keep.into_iter().enumerate() {
            if k {
                out.samples.push(self.samples[i].clone());
                out.splits.push(self.splits[i]);
            }
        }
        out
    }
}

/// Sizes `(train, validation, test)` for `n` in-distribution samples.
///
/// Test takes `⌈n/10⌉`, validation `⌈r/5⌉` of the remaining `r`, train the
/// rest; neither held-out split is allowed to consume the last sample.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    if n == 0 {
        return (0, 0, 0);
    }
    let test = n.div_ceil(10).min(n - 1);
    let rest = n - test;
    let val = rest.div_ceil(5).min(rest - 1);
    (rest - val, val, test)
}

/// Result of [`assemble_dataset`], with the number of discarded solves.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub dataset: Dataset,
    pub discarded: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    pub newton: NewtonOptions,
    pub threads: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { newton: NewtonOptions::default(), threads: 1 }
    }
}

/// Solves every spec, drops non-converged solves and assigns splits.
///
/// Cubic-forcing samples are always labeled extrapolation. The remaining
/// converged samples are permuted with `seed` and cut into test,
/// validation and train by [`split_sizes`]. The output does not depend on
/// `opts.threads`.
pub fn assemble_dataset(
    system: &SystemSpec,
    grid: &Grid,
    specs: &[ForcingSpec],
    seed: u64,
    opts: AssemblyOptions,
) -> Result<Assembly> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no forcing specs to solve".into()));
    }
    let solved = solve_all(system, grid, specs, opts)?;
    let total = solved.len();
    let samples: Vec<SamplePair> = solved.into_iter().filter(|s| s.converged).collect();
    let discarded = total - samples.len();
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("all {total} solves failed to converge")));
    }

    let mut splits = vec![Split::Extrapolation; samples.len()];
    let mut pool: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.forcing.map(|f| f.is_cubic()).unwrap_or(false))
        .map(|(i, _)| i)
        .collect();
    let (_, n_val, n_test) = split_sizes(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    for (rank, &i) in pool.iter().enumerate() {
        splits[i] = if rank < n_test {
            Split::Test
        } else if rank < n_test + n_val {
            Split::Validation
        } else {
            Split::Train
        };
    }
    Ok(Assembly {
        dataset: Dataset { system: *system, grid: *grid, samples, splits },
        discarded,
    })
}

fn solve_all(system: &SystemSpec, grid: &Grid, specs: &[ForcingSpec], opts: AssemblyOptions) -> Result<Vec<SamplePair>> {
    let threads = opts.threads.max(1).min(specs.len());
    if threads == 1 {
        return specs.iter().map(|s| solve_forcing(system, s, grid, opts.newton)).collect();
    }
    let chunk = specs.len().div_ceil(threads);
    let parts: Vec<Result<Vec<SamplePair>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|s| solve_forcing(system, s, grid, opts.newton)).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(specs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
