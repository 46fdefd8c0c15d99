use cohsurf::circuit::*;
use cohsurf::couplings::*;
use cohsurf::lattice::*;
use cohsurf::mps::TruncationPolicy;
use cohsurf::sampler::*;
use rand::SeedableRng;
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let layout = build_layout(7, 7).unwrap();
    let n = layout.num_qubits();
    let rot = RotationSpec::uniform(n, 0.25 * PI, 0.304 * PI, 0.25 * PI);
    let coeffs = pauli_coefficients(&rot, ValidationMode::Strict).unwrap();
    let policy = TruncationPolicy::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);

    // One full sample to warm up and to get a realistic eta.
    let rec = sample_error_string_with(&layout, &coeffs, &policy, &mut rng, SampleOptions::default()).unwrap();

    let t = Instant::now();
    let state = evolve(&layout, &coeffs, &rec.eta, &policy).unwrap();
    println!("evolve (N gates):        {:?}  maxbond {}", t.elapsed(), state.max_bond_dim());

    let t = Instant::now();
    let _parts = finish_partitions(state, &layout, &coeffs, &rec.eta, &policy).unwrap();
    println!("finish (entropy+rerun):  {:?}", t.elapsed());

    let t = Instant::now();
    let _rec2 = sample_error_string_with(&layout, &coeffs, &policy, &mut rng, SampleOptions::default()).unwrap();
    println!("full sample:             {:?}", t.elapsed());
}
