//! Shared helpers for the integration and acceptance suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nextpoi::dataset::{
    build_relation_matrices, CheckIn, LocationRecord, Normalizers, RelationMatrices,
};
use nextpoi::geo::LatLon;
use nextpoi::model::{self, FeatureFlags, Mode, ModelInput, ModelParams};

/// A self-contained random scenario for gradient checking: tiny tables, a
/// short split input, and a candidate subset with the label first.
pub struct GradScenario {
    pub params: ModelParams,
    pub long: Vec<CheckIn>,
    pub short: Vec<CheckIn>,
    pub rel_long: RelationMatrices,
    pub rel_short: RelationMatrices,
    pub candidates: Vec<u32>,
    pub flags: FeatureFlags,
    /// When set, forward runs in training mode with dropout drawn from a
    /// stream re-seeded with this value on every call.
    pub dropout: Option<(f64, u64)>,
}

pub fn grad_scenario(seed: u64, flags: FeatureFlags, dropout: Option<(f64, u64)>) -> GradScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(1..=4);
    let locations = rng.random_range(4..=8);
    let dim = rng.random_range(3..=8);
    let buckets = 6;
    let params = ModelParams::init(users, locations, buckets, dim, &mut rng);

    let locs: Vec<LocationRecord> = (0..locations)
        .map(|id| LocationRecord {
            id: id as u32,
            position: LatLon::new(
                40.0 + rng.random_range(-0.05..0.05),
                -74.0 + rng.random_range(-0.05..0.05),
            ),
        })
        .collect();

    let user = rng.random_range(0..users) as u32;
    let n_long = if flags.use_long_short { rng.random_range(0..=3) } else { 0 };
    let n_short = rng.random_range(1..=3);
    let mut time = 1_000_000i64;
    let mut checkin = |rng: &mut ChaCha8Rng| {
        time += rng.random_range(600..90_000);
        let location = rng.random_range(0..locations) as u32;
        CheckIn {
            user,
            location,
            time,
            duration: rng.random_range(0..20_000),
            position: locs[location as usize].position,
        }
    };
    let long: Vec<CheckIn> = (0..n_long).map(|_| checkin(&mut rng)).collect();
    let short: Vec<CheckIn> = (0..n_short).map(|_| checkin(&mut rng)).collect();
    let query_time = time + rng.random_range(600..90_000);

    let label = rng.random_range(0..locations) as u32;
    let k = rng.random_range(1..locations.min(5));
    let mut candidates = vec![label];
    for id in 0..locations as u32 {
        if id != label && candidates.len() <= k {
            candidates.push(id);
        }
    }

    let norm = Normalizers { time_max: 500_000.0, space_max: 20_000.0 };
    let rel_long = build_relation_matrices(&long, query_time, &candidates, &locs, &norm);
    let rel_short = build_relation_matrices(&short, query_time, &candidates, &locs, &norm);

    GradScenario { params, long, short, rel_long, rel_short, candidates, flags, dropout }
}

impl GradScenario {
    pub fn input(&self) -> ModelInput<'_> {
        ModelInput {
            long: &self.long,
            short: &self.short,
            rel_long: &self.rel_long,
            rel_short: &self.rel_short,
            candidates: &self.candidates,
        }
    }

    pub fn loss(&self, params: &ModelParams) -> f64 {
        let fwd = self.forward(params);
        model::cross_entropy_loss(&fwd.scores, 0)
    }

    pub fn forward(&self, params: &ModelParams) -> model::Forward {
        match self.dropout {
            None => model::forward(params, &self.input(), self.flags, Mode::Eval),
            Some((rate, seed)) => {
                // A fresh stream per call keeps the masks identical across
                // the perturbed finite-difference evaluations.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                model::forward(
                    params,
                    &self.input(),
                    self.flags,
                    Mode::Train { dropout: rate, rng: &mut rng },
                )
            }
        }
        .expect("forward succeeds")
    }

}

/// Central-difference check of every parameter block. Returns the worst
/// relative error seen per block name.
pub fn check_gradients(scenario: &GradScenario, step: f64, tol: f64) -> Vec<(String, f64)> {
    let fwd = scenario.forward(&scenario.params);
    let grads =
        model::backward(&scenario.params, &scenario.input(), &fwd, 0, scenario.flags)
            .expect("backward succeeds");

    let mut worst: Vec<(String, f64)> = Vec::new();
    let block_count = scenario.params.blocks().len();
    for block_idx in 0..block_count {
        let (name, analytic) = {
            let blocks = grads.blocks();
            let (name, data) = &blocks[block_idx];
            (name.to_string(), data.to_vec())
        };
        let mut block_worst = 0.0f64;
        for i in 0..analytic.len() {
            let mut perturbed = scenario.params.clone();
            {
                let mut blocks = perturbed.blocks_mut();
                blocks[block_idx].1[i] += step;
            }
            let plus = scenario.loss(&perturbed);
            {
                let mut blocks = perturbed.blocks_mut();
                blocks[block_idx].1[i] -= 2.0 * step;
            }
            let minus = scenario.loss(&perturbed);
            let fd = (plus - minus) / (2.0 * step);
            let a = analytic[i];
            let denom = a.abs().max(fd.abs());
            let rel = if denom < 1e-10 { 0.0 } else { (a - fd).abs() / denom };
            // Tiny gradients drown in truncation noise; the absolute floor
            // keeps the check meaningful without loosening the relative
            // tolerance where it matters.
            if (a - fd).abs() > 1e-7 && rel > block_worst {
                block_worst = rel;
            }
            assert!(
                rel <= tol || (a - fd).abs() <= 1e-7,
                "block {name}[{i}]: analytic {a} vs fd {fd} (rel {rel:.3e})"
            );
        }
        worst.push((name, block_worst));
    }
    worst
}
