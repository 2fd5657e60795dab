mod common;

use common::*;
use nalgebra::{DMatrix, DVector};

use spice_core::model::{BlockSpec, ItemFamily, ResponseRecord, Unit};
use spice_core::regression::PriorSpec;
use spice_core::sampler::{run, BlockModel, Precision, Problem, SamplerConfig};
use spice_core::simgen::{generate, SimBlock, SimSpec};
use spice_core::Error;

const GAUSS_ITEMS: [[f64; 3]; 4] = [[0.5, 1.2, 0.7], [-0.3, 0.8, 1.1], [1.0, 1.5, 0.9], [0.0, 0.6, 0.5]];
const PERSON_MEAN: f64 = 0.3;
const PERSON_SD: f64 = 0.8;
/// Free item with no responses; its regression is fixed at these values
/// (unconstrained scale: d, log a, log sigma).
const FREE_ITEM_MEAN: [f64; 3] = [0.2, -0.1, 0.3];
const FREE_ITEM_SD: [f64; 3] = [0.5, 0.3, 0.4];

fn unit(id: usize, block: usize, latent: Vec<f64>, fixed: bool) -> Unit {
    Unit {
        id,
        block,
        latent,
        features: vec![1.0],
        fixed,
        weight: 1.0,
    }
}

/// Persons 0..5 answer fixed Gaussian items; person 5 and item 4 have no
/// responses.
fn gaussian_problem() -> (Problem, Vec<ResponseRecord>) {
    let fam = ItemFamily::Gaussian;
    let answers: [&[(usize, f64)]; 5] = [
        &[(0, 1.1), (1, 0.2)],
        &[(0, -0.4), (2, 0.3), (3, -0.2)],
        &[(1, 1.7)],
        &[(0, 2.0), (1, 1.0), (2, 3.1), (3, 0.9)],
        &[(2, -1.2), (3, 0.4)],
    ];
    let responses: Vec<ResponseRecord> = answers
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&(j, y)| ResponseRecord::new(i, j, y)))
        .collect();
    let persons: Vec<Unit> = (0..6).map(|i| unit(i, 0, vec![0.0], false)).collect();
    let mut items: Vec<Unit> = GAUSS_ITEMS
        .iter()
        .enumerate()
        .map(|(j, psi)| unit(j, 0, fam.to_unconstrained(psi).unwrap(), true))
        .collect();
    items.push(unit(4, 0, vec![0.0; 3], false));

    let pspec = BlockSpec::person(0, 1, 1, (0..6).collect());
    let person_model = BlockModel::new(pspec, PriorSpec::diffuse(1, 1, 0.01, (0.0, 3.0))).fix_all(
        DMatrix::from_element(1, 1, PERSON_MEAN),
        DVector::from_element(1, PERSON_SD),
        DMatrix::identity(1, 1),
    );
    let ispec = BlockSpec::item(1, fam, 1, (0..5).collect());
    let item_model = BlockModel::new(ispec, PriorSpec::diffuse(1, 3, 0.01, (0.0, 3.0))).fix_all(
        DMatrix::from_row_slice(1, 3, &FREE_ITEM_MEAN),
        DVector::from_row_slice(&FREE_ITEM_SD),
        DMatrix::identity(3, 3),
    );
    let problem = Problem::new(responses.clone(), persons, items, vec![person_model], vec![item_model]).unwrap();
    (problem, responses)
}

/// Normal-normal posterior of each person's latent.
fn exact_person_posterior(responses: &[ResponseRecord], person: usize) -> (f64, f64) {
    let mut precision = 1.0 / PERSON_SD.powi(2);
    let mut weighted = PERSON_MEAN / PERSON_SD.powi(2);
    for r in responses.iter().filter(|r| r.person == person) {
        let [d, a, s] = GAUSS_ITEMS[r.item];
        precision += a * a / (s * s);
        weighted += a * (r.value - d) / (s * s);
    }
    (weighted / precision, 1.0 / precision)
}

fn long_config() -> SamplerConfig {
    SamplerConfig {
        m4: 60_000,
        thin: 1,
        chains: 1,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn gaussian_persons_match_conjugate_posterior() {
    let (problem, responses) = gaussian_problem();
    let out = run(&problem, &long_config()).unwrap();
    let chain = &out.chains[0];
    for i in 0..6 {
        let col = out.layout.position(&format!("person{i}.dim0")).unwrap();
        let xs = chain.column(col);
        let (mean, var) = exact_person_posterior(&responses, i);
        let mcse = batch_mcse(&xs, 50);
        let got = chain.moments.mean[col];
        assert!((got - mean).abs() < 4.0 * mcse, "person {i}: mean {got} vs {mean} (mcse {mcse})");
        let v = chain.moments.sd(col).powi(2);
        assert!((v / var - 1.0).abs() < 0.06, "person {i}: variance {v} vs {var}");
    }
}

#[test]
fn unlinked_item_recovers_its_prior() {
    let (problem, _) = gaussian_problem();
    let out = run(&problem, &long_config()).unwrap();
    let chain = &out.chains[0];
    let names = ["d", "a", "sigma"];
    for (t, name) in names.iter().enumerate() {
        let col = out.layout.position(&format!("item4.{name}")).unwrap();
        // back to the unconstrained scale
        let xs: Vec<f64> = chain
            .column(col)
            .iter()
            .map(|v| if t == 0 { *v } else { v.ln() })
            .collect();
        let mcse = batch_mcse(&xs, 50);
        assert!((mean(&xs) - FREE_ITEM_MEAN[t]).abs() < 4.0 * mcse, "{name}: {}", mean(&xs));
        let sd = variance(&xs).sqrt();
        assert!((sd / FREE_ITEM_SD[t] - 1.0).abs() < 0.06, "{name}: sd {sd}");
    }
}

fn small_spec(seed: u64) -> SimSpec {
    SimSpec {
        seed,
        responses_per_person: 8,
        popularity_skew: 0.0,
        weights: Default::default(),
        person_blocks: vec![SimBlock {
            b: Some(vec![vec![0.0]]),
            s: Some(vec![1.0]),
            fixed: true,
            ..SimBlock::person(0, 150, 1)
        }],
        item_blocks: vec![SimBlock {
            features: 1,
            ..SimBlock::items(1, 25, ItemFamily::TwoPl)
        }],
    }
}

fn short_config(workers: usize) -> SamplerConfig {
    SamplerConfig {
        m1: 30,
        m2: 60,
        m3: 60,
        m4: 100,
        thin: 2,
        chains: 2,
        seed: 42,
        workers,
        ..Default::default()
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let spec = small_spec(1);
    let problem = generate(&spec).unwrap().problem(&spec, 0.01, (0.0, 3.0)).unwrap();
    let one = run(&problem, &short_config(1)).unwrap();
    let eight = run(&problem, &short_config(8)).unwrap();
    let again = run(&problem, &short_config(1)).unwrap();
    for c in 0..2 {
        assert_eq!(one.chains[c].draws, eight.chains[c].draws);
        assert_eq!(one.chains[c].moments, eight.chains[c].moments);
        assert_eq!(one.chains[c].draws, again.chains[c].draws);
    }
    assert_ne!(one.chains[0].draws, one.chains[1].draws);
    let other = run(&problem, &SamplerConfig { seed: 43, ..short_config(1) }).unwrap();
    assert_ne!(one.chains[0].draws, other.chains[0].draws);
}

#[test]
fn fixed_values_never_move() {
    let spec = small_spec(2);
    let g = generate(&spec).unwrap();
    let mut problem = g.problem(&spec, 0.01, (0.0, 3.0)).unwrap();
    // hold two items and one person at their true values
    for j in [0, 3] {
        problem.items[j].fixed = true;
    }
    problem.persons[7].fixed = true;
    let before_items: Vec<Vec<f64>> = [0, 3].iter().map(|&j| problem.items[j].latent.clone()).collect();
    let before_person = problem.persons[7].latent.clone();

    let out = run(&problem, &short_config(2)).unwrap();
    let names = out.layout.names();
    assert!(!names.iter().any(|n| n.starts_with("item0.") || n.starts_with("item3.")));
    assert!(!names.iter().any(|n| n == "person7.dim0"));
    assert!(!names.iter().any(|n| n.starts_with("block0.")));
    assert_eq!(names.len(), problem.free_parameter_count());

    for chain in &out.chains {
        let st = &chain.final_state;
        assert_eq!(st.theta[7], before_person[0]);
        for (&j, before) in [0usize, 3].iter().zip(&before_items) {
            let nat = ItemFamily::TwoPl.to_natural(before).unwrap();
            let range = problem.item_range(j);
            assert_eq!(&st.item_natural[range], nat.as_slice());
        }
        let reg = &st.persons[0].params;
        assert_eq!(reg.b[(0, 0)], 0.0);
        assert_eq!(reg.s[0], 1.0);
    }
}

#[test]
fn moments_match_an_unthinned_trace() {
    let spec = small_spec(3);
    let problem = generate(&spec).unwrap().problem(&spec, 0.01, (0.0, 3.0)).unwrap();
    let out = run(&problem, &SamplerConfig { thin: 1, ..short_config(2) }).unwrap();
    for chain in &out.chains {
        assert_eq!(chain.draws.len(), 100);
        assert_eq!(chain.moments.count, 100);
        for i in 0..out.layout.len() {
            let xs = chain.column(i);
            let m = mean(&xs);
            assert!((chain.moments.mean[i] - m).abs() < 1e-10 * m.abs().max(1.0));
            let sd = variance(&xs).sqrt();
            assert!((chain.moments.sd(i) - sd).abs() < 1e-9 * sd.max(1.0));
            assert!((0.0..=1.0).contains(&chain.acceptance[i]));
        }
    }
}

#[test]
fn thinning_keeps_every_thin_th_draw() {
    let spec = small_spec(4);
    let problem = generate(&spec).unwrap().problem(&spec, 0.01, (0.0, 3.0)).unwrap();
    let full = run(&problem, &SamplerConfig { thin: 1, ..short_config(1) }).unwrap();
    let thinned = run(&problem, &SamplerConfig { thin: 10, ..short_config(1) }).unwrap();
    let c = &thinned.chains[0];
    assert_eq!(c.draws.len(), 10);
    for (k, row) in c.draws.iter().enumerate() {
        assert_eq!(row, &full.chains[0].draws[10 * k + 9]);
    }
    assert_eq!(c.moments, full.chains[0].moments);
}

#[test]
fn single_precision_stores_f32_latents() {
    let spec = small_spec(5);
    let problem = generate(&spec).unwrap().problem(&spec, 0.01, (0.0, 3.0)).unwrap();
    let cfg = SamplerConfig { precision: Precision::Single, ..short_config(2) };
    let out = run(&problem, &cfg).unwrap();
    for (i, name) in out.layout.names().iter().enumerate() {
        if name.starts_with("person") {
            for row in &out.chains[0].draws {
                assert_eq!(row[i], row[i] as f32 as f64, "{name}");
            }
        }
    }
    for st in out.chains.iter().map(|c| &c.final_state) {
        for b in st.items.iter() {
            assert!(b.latents.iter().all(|v| *v == *v as f32 as f64));
        }
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let spec = small_spec(6);
    let problem = generate(&spec).unwrap().problem(&spec, 0.01, (0.0, 3.0)).unwrap();
    for cfg in [
        SamplerConfig { workers: 0, ..short_config(1) },
        SamplerConfig { thin: 0, ..short_config(1) },
        SamplerConfig { a0: 0.6, ..short_config(1) },
    ] {
        assert!(matches!(run(&problem, &cfg), Err(Error::Validation(_))));
    }
}
