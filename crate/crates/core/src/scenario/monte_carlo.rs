use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{check_engine, AddressModel, AddressModelKind, DecodeCache, PhyModel};
use crate::error::Result;
use crate::rng;
use crate::sicqta::{Address, SicqtaEngine};

/// Trials per random stream.
pub const MC_CHUNK: u64 = 1 << 14;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl Estimate {
    fn from_sums(sum: f64, sum_sq: f64, trials: u64) -> Self {
        let n = trials as f64;
        let mean = sum / n;
        let var = if trials > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean, std_error: (var / n).sqrt(), trials }
    }

    /// True when `value` lies within `sigmas` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, sigmas: f64) -> bool {
        (self.mean - value).abs() <= sigmas * self.std_error + 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McThroughput {
    pub mac: Estimate,
    pub total: Estimate,
}

/// Draw one address assignment; user `i` owns element `i`.
pub fn sample_addresses<R: Rng + ?Sized>(model: &AddressModel, rng: &mut R) -> Vec<Address> {
    let bits = model.address_bits;
    let mut values = vec![0u32; model.users];
    match model.kind {
        AddressModelKind::DistinctUniform => {
            let picked = rand::seq::index::sample(rng, 1usize << bits, model.users);
            let mut picked: Vec<usize> = picked.into_vec();
            picked.shuffle(rng);
            for (v, p) in values.iter_mut().zip(picked) {
                *v = p as u32;
            }
        }
        AddressModelKind::IidBits => {
            let mut stack = vec![((0..model.users).collect::<Vec<_>>(), 0u32, 0u8)];
            while let Some((users, prefix, depth)) = stack.pop() {
                let rest = bits - depth;
                if users.len() <= 1 || rest == 0 {
                    for u in users {
                        let suffix = if rest == 0 { 0 } else { rng.random_range(0..1u32 << rest) };
                        values[u] = prefix << rest | suffix;
                    }
                    continue;
                }
                let cap = 1usize << (rest - 1);
                // iid bits, redrawn until both halves fit
                let (left, right) = loop {
                    let (left, right): (Vec<usize>, Vec<usize>) = users.iter().partition(|_| rng.random_bool(0.5));
                    if left.len() <= cap && right.len() <= cap {
                        break (left, right);
                    }
                };
                stack.push((left, prefix << 1, depth + 1));
                stack.push((right, prefix << 1 | 1, depth + 1));
            }
        }
    }
    values.into_iter().map(|v| Address::new(v, bits).expect("value fits")).collect()
}

/// Monte Carlo estimate of the MAC and total throughput.
///
/// Each trial draws addresses, runs the tree and, when `phy` is given,
/// draws one Bernoulli decode per repeated slot of every chain step. The
/// result depends only on `seed`, not on the number of worker threads.
pub fn monte_carlo_throughput(
    model: &AddressModel,
    engine: &SicqtaEngine,
    phy: Option<&PhyModel>,
    trials: u64,
    seed: u64,
) -> Result<McThroughput> {
    model.validate()?;
    check_engine(model, engine)?;
    if trials == 0 {
        return Err(crate::Error::invalid("mc_trials", "must be >= 1"));
    }
    let parts: Vec<[f64; 4]> = rng::chunks(trials, MC_CHUNK)
        .into_par_iter()
        .map(|(index, n)| run_chunk(model, engine, phy, seed, index, n))
        .collect::<Result<_>>()?;
    let mut sums = [0.0; 4];
    for part in &parts {
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
    }
    Ok(McThroughput {
        mac: Estimate::from_sums(sums[0], sums[1], trials),
        total: Estimate::from_sums(sums[2], sums[3], trials),
    })
}

fn run_chunk(
    model: &AddressModel,
    engine: &SicqtaEngine,
    phy: Option<&PhyModel>,
    seed: u64,
    index: u64,
    n: u64,
) -> Result<[f64; 4]> {
    let mut rng = rng::stream(seed, index);
    let mut cache = phy.map(DecodeCache::new);
    let mut sums = [0.0; 4];
    for _ in 0..n {
        let addresses = sample_addresses(model, &mut rng);
        let trace = engine.run(&addresses)?;
        let rho = model.users as f64 / trace.slots_used() as f64;
        let delivered = match (cache.as_mut(), phy) {
            (Some(cache), Some(phy)) => {
                let chain = trace.decode_chain();
                let probs = cache.step_probabilities(&chain, &phy.links)?;
                chain
                    .steps
                    .iter()
                    .zip(probs)
                    .all(|(step, pd)| (0..step.repeats()).any(|_| rng.random::<f64>() < pd))
            }
            _ => true,
        };
        let total = if delivered { rho } else { 0.0 };
        sums[0] += rho;
        sums[1] += rho * rho;
        sums[2] += total;
        sums[3] += total * total;
    }
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::mac_throughput;

    #[test]
    fn seed_determinism() {
        let model = AddressModel::new(AddressModelKind::IidBits, 3, 3).unwrap();
        let engine = SicqtaEngine::new(3).unwrap();
        let a = monte_carlo_throughput(&model, &engine, None, 40_000, 7).unwrap();
        let b = monte_carlo_throughput(&model, &engine, None, 40_000, 7).unwrap();
        let c = monte_carlo_throughput(&model, &engine, None, 40_000, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mac.mean, c.mac.mean);
        assert_eq!(a.mac, a.total);
    }

    #[test]
    fn samples_are_distinct_and_sized() {
        let mut rng = rng::stream(1, 0);
        for kind in [AddressModelKind::IidBits, AddressModelKind::DistinctUniform] {
            let model = AddressModel::new(kind, 2, 4).unwrap();
            for _ in 0..200 {
                let mut a = sample_addresses(&model, &mut rng);
                assert!(a.iter().all(|x| x.len() == 2));
                a.sort_by_key(|x| x.value());
                a.dedup();
                assert_eq!(a.len(), 4);
            }
        }
    }

    #[test]
    fn agrees_with_enumeration() {
        for kind in [AddressModelKind::IidBits, AddressModelKind::DistinctUniform] {
            let model = AddressModel::new(kind, 3, 2).unwrap();
            let engine = SicqtaEngine::new(3).unwrap();
            let exact = mac_throughput(&model, &engine).unwrap();
            let mc = monte_carlo_throughput(&model, &engine, None, 100_000, 3).unwrap();
            assert!(mc.mac.agrees_with(exact, 4.0), "{kind}: {exact} vs {:?}", mc.mac);
        }
    }
}
