//! Seeded problem instances.

use schauder_core::field::generators::{AnalyticCoefficient, BandLimited, CoefficientParams};
use schauder_core::field::io::to_bytes;
use schauder_core::{Field, FieldKind, GridSpec, Result, Source};

use crate::config::ExperimentConfig;

/// Band limit and mode count of the random data.
const KMAX: u32 = 4;
const MODES: usize = 8;

/// One problem: coefficient, load `F`, test field `g` and boundary data,
/// all analytic so that any grid can sample them.
pub struct Instance {
    pub index: usize,
    pub seed: u64,
    pub a: AnalyticCoefficient,
    pub f: BandLimited,
    pub g: BandLimited,
    pub boundary: BandLimited,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of instance `index`: a hash of the run seed and the index, so that
/// neighbouring run seeds share no instances.
pub fn instance_seed(run_seed: u64, index: usize) -> u64 {
    splitmix(splitmix(run_seed) ^ index as u64)
}

/// The coefficient construction keeps `σ(A) ⊂ [λ, Λ]` at every point, so
/// no clipping or regeneration is ever needed.
pub fn generate_instance(cfg: &ExperimentConfig, index: usize) -> Result<Instance> {
    let seed = instance_seed(cfg.seed, index);
    let mut params = CoefficientParams::new(cfg.coefficient_class, cfg.n, cfg.lambda, cfg.big_lambda, seed);
    params.alpha = cfg.alpha;
    let sub = |k: u64| splitmix(seed ^ k);
    Ok(Instance {
        index,
        seed,
        a: AnalyticCoefficient::new(params)?,
        f: BandLimited::new(cfg.n, cfg.n, KMAX, MODES, sub(1)),
        g: BandLimited::new(cfg.n, cfg.n, KMAX, MODES, sub(2)),
        boundary: BandLimited::new(cfg.n, 1, KMAX, MODES, sub(3)),
    })
}

impl Instance {
    /// Serialized samples of every field on `spec`; equal bytes mean equal
    /// instances at that resolution.
    pub fn fingerprint(&self, spec: &GridSpec) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let parts: [(&dyn Source, FieldKind); 4] = [
            (&self.a, FieldKind::Matrix),
            (&self.f, FieldKind::Vector),
            (&self.g, FieldKind::Vector),
            (&self.boundary, FieldKind::Scalar),
        ];
        for (src, kind) in parts {
            out.extend(to_bytes(&Field::sample(spec.clone(), kind, src)?));
        }
        Ok(out)
    }
}
