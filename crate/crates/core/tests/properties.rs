use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specmix::assignment::{build_cost, hungarian, project_onto_dictionaries, CostMatrix};
use specmix::dictionary::{
    attribute_pick, from_regions, normalize_constraints, CountConstraint, CountKind, Dictionary, RegionSpec,
};
use specmix::io::{parse_regions, HsiCube};
use specmix::linalg::{solve_ls, solve_nnls_from, Matrix, Metric, SolverOptions};
use specmix::m2pals::{m2pals, M2palsOptions};
use specmix::synth::{
    build_pure_dictionaries, default_endmembers, generate_synthetic, miss_selection_rate,
};

fn matrix(seed: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_col_major(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn dicts_from(seed: u64, bands: usize, sizes: &[usize]) -> Vec<Dictionary> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| Dictionary::external(format!("d{i}"), matrix(seed ^ ((i as u64 + 1) * 0x9e37), bands, s, 0.0, 1.0)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ls_satisfies_normal_equations(seed in any::<u64>(), m in 4usize..12, n in 4usize..12, r in 1usize..4) {
        let data = matrix(seed, m, n, -1.0, 1.0);
        let b = matrix(seed ^ 1, n, r, -1.0, 1.0);
        let a = solve_ls(&data, &b, &SolverOptions::default()).unwrap();
        let resid = data.sub(&a.matmul_t(&b).unwrap()).unwrap();
        let normal = resid.matmul(&b).unwrap().frobenius_norm();
        prop_assert!(normal <= 1e-8 * data.frobenius_norm() * b.frobenius_norm(), "{normal}");
    }

    #[test]
    fn nnls_is_nonnegative_and_monotone(seed in any::<u64>(), m in 3usize..15, n in 1usize..10, r in 1usize..5) {
        let data = matrix(seed, m, n, -1.0, 2.0);
        let a = matrix(seed ^ 2, m, r, -1.0, 1.0);
        let b0 = matrix(seed ^ 3, n, r, -1.0, 1.0);
        let out = solve_nnls_from(&data, &a, &b0, &SolverOptions::default()).unwrap();
        prop_assert!(out.b.min_value() >= 0.0);
        for w in out.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", out.objective_history);
        }
    }

    #[test]
    fn hungarian_cost_invariant_under_permutation(seed in any::<u64>(), n in 1usize..7, extra in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = n + extra;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..cols).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
        let mut rp: Vec<usize> = (0..n).collect();
        let mut cp: Vec<usize> = (0..cols).collect();
        use rand::seq::SliceRandom;
        rp.shuffle(&mut rng);
        cp.shuffle(&mut rng);
        let permuted: Vec<Vec<f64>> = rp.iter().map(|&i| cp.iter().map(|&j| rows[i][j]).collect()).collect();
        let a = hungarian(&CostMatrix::from_rows(&rows).unwrap()).unwrap().total_cost;
        let b = hungarian(&CostMatrix::from_rows(&permuted).unwrap()).unwrap().total_cost;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn projection_cost_matches_raw_distances(seed in any::<u64>(), sizes in prop::collection::vec(1usize..5, 1..4), metric in prop::sample::select(Metric::ALL.to_vec())) {
        let dicts = dicts_from(seed, 6, &sizes);
        let total: usize = sizes.iter().sum();
        let r = 1 + (seed as usize) % total.min(4);
        let constraints: Vec<CountConstraint> = dicts.iter().map(|d| CountConstraint::at_most(d.len())).collect();
        let a = matrix(seed ^ 7, 6, r, 0.0, 1.0);
        let (sel, sol) = project_onto_dictionaries(&a, &dicts, &constraints, metric).unwrap();
        let raw: f64 = (0..r).map(|j| metric.assignment_cost(a.column(j), sel.column(j)).unwrap()).sum();
        prop_assert!((raw - sol.total_cost).abs() <= 1e-10 * (1.0 + raw.abs()), "{raw} vs {}", sol.total_cost);
        for (j, (&i, &k)) in sol.column_to_dict.iter().zip(&sol.column_to_atom).enumerate() {
            prop_assert_eq!(sel.column(j), dicts[i].atom(k));
        }
    }

    #[test]
    fn single_dictionary_without_conflicts_is_nearest_atom(seed in any::<u64>(), s in 4usize..10, r in 1usize..4) {
        // Columns of A are perturbed copies of distinct atoms, so nearest atoms never collide.
        let d = Dictionary::external("d", matrix(seed, 8, s, 0.0, 1.0));
        let picks: Vec<usize> = (0..r).map(|j| (j * 3 + seed as usize) % s).collect();
        let mut uniq = picks.clone();
        uniq.sort();
        uniq.dedup();
        prop_assume!(uniq.len() == r);
        let a = Matrix::from_columns(&picks.iter().map(|&k| d.atom(k).iter().map(|v| v + 1e-3).collect::<Vec<_>>()).collect::<Vec<_>>()).unwrap();
        let cost = build_cost(&a, std::slice::from_ref(&d), Metric::Euclid).unwrap();
        let nearest = cost.best_atom[0].clone();
        let (_, sol) = project_onto_dictionaries(&a, std::slice::from_ref(&d), &[CountConstraint::exact(r)], Metric::Euclid).unwrap();
        prop_assert_eq!(sol.column_to_atom, nearest);
    }

    #[test]
    fn normalization_idempotent_and_lower_bounds_hold(seed in any::<u64>(), sizes in prop::collection::vec(1usize..5, 1..4), kinds in prop::collection::vec(0u8..3, 3)) {
        let dicts = dicts_from(seed, 5, &sizes);
        let constraints: Vec<CountConstraint> = dicts
            .iter()
            .zip(&kinds)
            .map(|(d, &k)| {
                let c = d.len().min(1 + (seed as usize) % 2);
                match k {
                    0 => CountConstraint::at_least(c),
                    1 => CountConstraint::exact(c),
                    _ => CountConstraint::at_most(c),
                }
            })
            .collect();
        let r = constraints.iter().map(|c| c.count).sum::<usize>().max(1);
        let Ok((nd, nc)) = normalize_constraints(&dicts, &constraints, r) else { return Ok(()) };
        prop_assert_eq!(normalize_constraints(&nd, &nc, r).unwrap(), (nd.clone(), nc.clone()));
        prop_assert!(nc.iter().all(|c| c.kind != CountKind::AtLeast));

        let a = matrix(seed ^ 5, 5, r, 0.0, 1.0);
        let Ok((_, sol)) = project_onto_dictionaries(&a, &nd, &nc, Metric::Nip) else { return Ok(()) };
        let mut counts = vec![0; dicts.len()];
        for (&i, &k) in sol.column_to_dict.iter().zip(&sol.column_to_atom) {
            counts[attribute_pick(&nd, i, k).0] += 1;
        }
        for (c, n) in constraints.iter().zip(&counts) {
            if c.kind == CountKind::AtLeast {
                prop_assert!(*n >= c.count, "{constraints:?} -> {counts:?}");
            }
        }
    }

    #[test]
    fn m2pals_contracts_and_determinism(seed in any::<u64>(), s in 1usize..6, snr in prop::sample::select(vec![10.0, 20.0, 40.0, f64::INFINITY])) {
        let em = default_endmembers(30, 3, 11);
        let inst = generate_synthetic(&em, 40, snr, seed).unwrap();
        let pd = build_pure_dictionaries(&inst, s, seed ^ 9).unwrap();
        let opts = M2palsOptions { rng_seed: seed, ..Default::default() };
        let res = m2pals(&inst.m, &pd.dicts, &pd.constraints, 3, &opts).unwrap();
        prop_assert!(res.contract_violations(inst.m.frobenius_norm(), 50).is_empty());
        let again = m2pals(&inst.m, &pd.dicts, &pd.constraints, 3, &opts).unwrap();
        prop_assert_eq!(res.a.as_col_major(), again.a.as_col_major());
        prop_assert_eq!(res.b.as_col_major(), again.b.as_col_major());
        prop_assert_eq!(&res.residual_history, &again.residual_history);
        // Exact(1) per dictionary.
        let mut per_dict = vec![0; 3];
        for src in &res.sources {
            per_dict[src.dictionary] += 1;
        }
        prop_assert_eq!(per_dict, vec![1, 1, 1]);
    }

    #[test]
    fn miss_rate_is_multiple_of_one_over_r(selected in prop::collection::vec(0usize..12, 1..7)) {
        let r = selected.len();
        let pure: Vec<usize> = (0..r).map(|k| k * 2).collect();
        let rate = miss_selection_rate(&selected, &pure).unwrap();
        let missed = selected.iter().filter(|j| !pure.contains(j)).count();
        prop_assert_eq!(rate, 100.0 * missed as f64 / r as f64);
        prop_assert!((0.0..=100.0).contains(&rate));
    }

    #[test]
    fn synthetic_instances_reproducible(seed in any::<u64>(), snr in prop::sample::select(vec![0.0, 30.0, f64::INFINITY])) {
        let em = default_endmembers(20, 3, 3);
        let a = generate_synthetic(&em, 30, snr, seed).unwrap();
        let b = generate_synthetic(&em, 30, snr, seed).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
        prop_assert_eq!(&a.pure_indices, &b.pure_indices);
        prop_assert_eq!(build_pure_dictionaries(&a, 4, seed).unwrap(), build_pure_dictionaries(&b, 4, seed).unwrap());
    }

    #[test]
    fn region_json_roundtrip(rects in prop::collection::vec((0usize..20, 0usize..20, 1usize..5, 1usize..5, 0u8..3, 1usize..4), 0..5)) {
        let regions: Vec<RegionSpec> = rects
            .iter()
            .enumerate()
            .map(|(i, &(r, c, h, w, k, n))| {
                let rule = [CountConstraint::exact(n), CountConstraint::at_most(n), CountConstraint::at_least(n)][k as usize];
                RegionSpec::rect(r, c, h, w, rule).with_label(format!("region {i}"))
            })
            .collect();
        let text = serde_json::to_string(&regions).unwrap();
        let parsed = parse_regions(&text).unwrap();
        prop_assert_eq!(&parsed, &regions);
        prop_assert_eq!(serde_json::to_string(&parsed).unwrap(), text);
    }

    #[test]
    fn region_atom_count_is_area(h in 1usize..6, w in 1usize..6, rh in 1usize..6, rw in 1usize..6) {
        prop_assume!(rh <= h && rw <= w);
        let cube = HsiCube::from_matrix(&matrix(1, 3, h * w, 0.0, 1.0), h, w).unwrap();
        let region = RegionSpec::rect(h - rh, w - rw, rh, rw, CountConstraint::exact(1));
        let (d, _) = from_regions(&cube, &[region]).unwrap();
        prop_assert_eq!(d[0].len(), rh * rw);
        prop_assert_eq!(d[0].pixel(0).map(|p| (p.row, p.col)), Some((h - rh, w - rw)));
    }
}
