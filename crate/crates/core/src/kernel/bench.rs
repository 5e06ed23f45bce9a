use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bind, expand, run_compiled, run_interpreted, Constants, KernelError};
use crate::dsl::Equation;
use crate::mesh::{Field, FieldSet, Mesh, Rank};
use crate::quantity::Dimension;

/// Smallest site count for which timings are considered stable.
pub const MIN_BENCH_SITES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub sites: usize,
    pub repetitions: usize,
    pub interpreted_ns_per_site: f64,
    pub compiled_ns_per_site: f64,
    /// Interpreted time over compiled time.
    pub speedup: f64,
}

/// Fields filled with uniform values in `[-1, 1)` from a fixed seed.
pub fn seeded_fields(mesh: Mesh, specs: &[(&str, Rank)], seed: u64) -> Result<FieldSet, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = FieldSet::new(mesh);
    for (name, rank) in specs {
        let f = set.add(name, *rank, Dimension::NONE)?;
        for v in f.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    Ok(set)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Time both backends on the same workload, median of `repetitions` runs.
///
/// Expansion and binding happen once, outside the timed region; only kernel
/// execution is measured.
pub fn benchmark_backends(
    eq: &Equation,
    constants: &Constants,
    fields: &FieldSet,
    repetitions: usize,
) -> Result<BenchReport, KernelError> {
    let sites = fields.mesh().site_count();
    if sites < MIN_BENCH_SITES {
        return Err(KernelError::TooFewSites {
            min: MIN_BENCH_SITES,
            got: sites,
        });
    }
    let repetitions = repetitions.max(1);
    let bk = bind(&expand(eq)?, constants, fields)?;
    let mut out = Field::new(eq.target.name.clone(), bk.rank(), *fields.mesh(), Dimension::NONE);

    // warm-up, also surfaces any binding error before timing
    run_interpreted(eq, constants, fields, &mut out)?;
    run_compiled(&bk, fields, &mut out)?;

    let mut interp = Vec::with_capacity(repetitions);
    let mut compiled = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        run_interpreted(eq, constants, fields, &mut out)?;
        interp.push(t.elapsed().as_nanos() as f64);
        std::hint::black_box(out.data());

        let t = Instant::now();
        run_compiled(&bk, fields, &mut out)?;
        compiled.push(t.elapsed().as_nanos() as f64);
        std::hint::black_box(out.data());
    }
    let (ti, tc) = (median(interp), median(compiled).max(1.0));
    Ok(BenchReport {
        sites,
        repetitions,
        interpreted_ns_per_site: ti / sites as f64,
        compiled_ns_per_site: tc / sites as f64,
        speedup: ti / tc,
    })
}
