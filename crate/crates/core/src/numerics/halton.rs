use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NumericsError;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Radical inverse of `index` in a prime `base`.
pub fn halton(index: u64, base: u64) -> Result<f64, NumericsError> {
    if !is_prime(base) {
        return Err(NumericsError::NonPrimeBase(base));
    }
    if index == 0 {
        return Err(NumericsError::ZeroIndex);
    }
    Ok(radical_inverse(index, base, None))
}

fn radical_inverse(mut index: u64, base: u64, perm: Option<&[u64]>) -> f64 {
    // Exact integer numerator and denominator while they fit.
    let mut num: u128 = 0;
    let mut den: u128 = 1;
    while index > 0 {
        let digit = index % base;
        let digit = perm.map_or(digit, |p| p[digit as usize]);
        match den.checked_mul(base as u128) {
            Some(d) => {
                num = num * base as u128 + digit as u128;
                den = d;
            }
            None => break,
        }
        index /= base;
    }
    num as f64 / den as f64
}

/// Halton draw layout: one prime per random dimension, `drop` leading points
/// discarded, `n_draws` consecutive points per individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaltonConfig {
    pub primes: Vec<u64>,
    pub drop: u64,
    pub n_draws: usize,
    /// Seed for random digit permutations; `None` keeps the plain sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scramble: Option<u64>,
}

impl Default for HaltonConfig {
    fn default() -> Self {
        Self { primes: vec![2, 3], drop: 10, n_draws: 500, scramble: None }
    }
}

impl HaltonConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.n_draws == 0 {
            return Err(NumericsError::InvalidHalton("n_draws must be >= 1".into()));
        }
        for (i, &p) in self.primes.iter().enumerate() {
            if !is_prime(p) {
                return Err(NumericsError::NonPrimeBase(p));
            }
            if self.primes[..i].contains(&p) {
                return Err(NumericsError::InvalidHalton(format!("prime {p} repeated")));
            }
        }
        Ok(())
    }

    /// Digit permutations for each dimension. Digit 0 stays fixed so that
    /// points keep a finite expansion.
    fn permutations(&self) -> Option<Vec<Vec<u64>>> {
        let seed = self.scramble?;
        Some(
            self.primes
                .iter()
                .enumerate()
                .map(|(d, &p)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(d as u64);
                    let mut tail: Vec<u64> = (1..p).collect();
                    tail.shuffle(&mut rng);
                    std::iter::once(0).chain(tail).collect()
                })
                .collect(),
        )
    }
}

/// Uniform draws laid out as `[individual][draw][dimension]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HaltonDraws {
    values: Vec<f64>,
    n_individuals: usize,
    n_draws: usize,
    dims: usize,
}

impl HaltonDraws {
    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn get(&self, individual: usize, draw: usize, dim: usize) -> f64 {
        self.values[(individual * self.n_draws + draw) * self.dims + dim]
    }

    /// All dimensions of one draw.
    pub fn point(&self, individual: usize, draw: usize) -> &[f64] {
        let start = (individual * self.n_draws + draw) * self.dims;
        &self.values[start..start + self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Individual `i` receives sequence indices `drop + i*n_draws + 1 ..= drop + (i+1)*n_draws`
/// of one global sequence per dimension.
pub fn halton_matrix(cfg: &HaltonConfig, n_individuals: usize) -> Result<HaltonDraws, NumericsError> {
    cfg.validate()?;
    let dims = cfg.primes.len();
    let perms = cfg.permutations();
    let mut values = Vec::with_capacity(n_individuals * cfg.n_draws * dims);
    for i in 0..n_individuals {
        for r in 0..cfg.n_draws {
            let index = cfg.drop + (i * cfg.n_draws + r) as u64 + 1;
            for (d, &p) in cfg.primes.iter().enumerate() {
                let perm = perms.as_ref().map(|ps| ps[d].as_slice());
                values.push(radical_inverse(index, p, perm));
            }
        }
    }
    Ok(HaltonDraws { values, n_individuals, n_draws: cfg.n_draws, dims })
}
