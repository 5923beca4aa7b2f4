mod common;

use common::{random_matrix, random_model};
use ddse::encoder::Arch;
use ddse::projection::{
    check_constraints, project_model, project_topk, Axis, CardinalityConstraint,
};
use ddse::{Error, Matrix, Rng};
use proptest::prelude::*;

fn row_con(s: usize) -> CardinalityConstraint {
    CardinalityConstraint { axis: Axis::Row, s }
}

fn col_con(s: usize) -> CardinalityConstraint {
    CardinalityConstraint { axis: Axis::Column, s }
}

/// Exhaustive oracle: tries every s-subset of one slice and keeps the one
/// with maximal kept energy, breaking ties toward lexicographically smaller
/// index sets. Only viable for short slices.
fn best_subset(slice: &[f64], s: usize) -> Vec<usize> {
    let n = slice.len();
    assert!(n <= 16, "oracle is exponential");
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != s {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let energy: f64 = idx.iter().map(|&i| slice[i] * slice[i]).sum();
        let better = match &best {
            None => true,
            // Strictly-greater keeps the first (lexicographically smallest)
            // subset among energy ties, matching lower-index tie-breaking.
            Some((e, _)) => energy > *e + 1e-15 * energy.max(1.0),
        };
        if better {
            best = Some((energy, idx));
        }
    }
    best.unwrap().1
}

fn row_support(m: &Matrix, i: usize) -> Vec<usize> {
    (0..m.cols).filter(|&j| m.at(i, j) != 0.0).collect()
}

fn col_support(m: &Matrix, j: usize) -> Vec<usize> {
    (0..m.rows).filter(|&i| m.at(i, j) != 0.0).collect()
}

#[test]
fn kept_entries_are_verbatim_and_match_oracle() {
    let mut rng = Rng::new(41);
    for _ in 0..20 {
        let w = random_matrix(5, 7, 1.0, &mut rng);
        let s = 1 + rng.below(6);
        let p = project_topk(&w, &row_con(s)).unwrap();
        for i in 0..5 {
            let support = row_support(&p, i);
            assert!(support.len() <= s);
            let oracle = best_subset(w.row(i), s);
            // Entries are generic (no exact magnitude ties), so supports match
            // exactly and kept values are bit-identical to the input.
            assert_eq!(support, oracle, "row {i}");
            for j in support {
                assert_eq!(p.at(i, j), w.at(i, j));
            }
        }
    }
}

#[test]
fn column_projection_matches_row_projection_of_transpose() {
    let mut rng = Rng::new(42);
    for _ in 0..10 {
        let w = random_matrix(6, 4, 1.0, &mut rng);
        let s = 1 + rng.below(4);
        let direct = project_topk(&w, &col_con(s)).unwrap();
        let via_t = project_topk(&w.transpose(), &row_con(s)).unwrap().transpose();
        assert_eq!(direct.data, via_t.data);
    }
}

#[test]
fn projection_is_idempotent_bitwise() {
    let mut rng = Rng::new(43);
    let w = random_matrix(8, 10, 1.0, &mut rng);
    for s in [1, 3, 5, 10] {
        let once = project_topk(&w, &row_con(s)).unwrap();
        let twice = project_topk(&once, &row_con(s)).unwrap();
        assert_eq!(once.data, twice.data, "s = {s}");
    }
}

#[test]
fn magnitude_ties_break_toward_lower_index() {
    // Row [1, -1, 1, 1] with s = 2: indices 0 and 1 survive.
    let w = Matrix::new(1, 4, vec![1.0, -1.0, 1.0, 1.0]).unwrap();
    let p = project_topk(&w, &row_con(2)).unwrap();
    assert_eq!(p.data, vec![1.0, -1.0, 0.0, 0.0]);
    // Mixed magnitudes with a tie at the cut: 2.0 beats the tied 1.0s, and
    // among the 1.0s the lower index wins.
    let w = Matrix::new(1, 4, vec![1.0, 2.0, 1.0, 1.0]).unwrap();
    let p = project_topk(&w, &row_con(2)).unwrap();
    assert_eq!(p.data, vec![1.0, 2.0, 0.0, 0.0]);
    // Signed zeros count as magnitude ties too.
    let w = Matrix::new(1, 3, vec![0.0, -0.0, 0.5]).unwrap();
    let p = project_topk(&w, &row_con(2)).unwrap();
    assert_eq!(row_support(&p, 0), vec![2]);
    assert_eq!(p.at(0, 2), 0.5);
}

#[test]
fn s_equal_to_axis_length_is_identity() {
    let mut rng = Rng::new(44);
    let w = random_matrix(3, 5, 1.0, &mut rng);
    let p = project_topk(&w, &row_con(5)).unwrap();
    assert_eq!(p.data, w.data);
    let p = project_topk(&w, &col_con(3)).unwrap();
    assert_eq!(p.data, w.data);
}

#[test]
fn rejects_invalid_s() {
    let w = Matrix::zeros(3, 5);
    assert!(matches!(
        project_topk(&w, &row_con(0)),
        Err(Error::Contract { .. })
    ));
    assert!(project_topk(&w, &row_con(6)).is_err());
    assert!(project_topk(&w, &col_con(4)).is_err());
}

#[test]
fn projection_is_euclidean_optimal() {
    // ||w - P(w)||^2 equals the energy of dropped entries; any other feasible
    // support drops at least as much energy. Checked against the exhaustive
    // oracle per row.
    let mut rng = Rng::new(45);
    let w = random_matrix(4, 9, 1.0, &mut rng);
    let s = 3;
    let p = project_topk(&w, &row_con(s)).unwrap();
    for i in 0..4 {
        let dropped: f64 = (0..9)
            .map(|j| {
                let d = w.at(i, j) - p.at(i, j);
                d * d
            })
            .sum();
        let oracle_keep = best_subset(w.row(i), s);
        let oracle_dropped: f64 = (0..9)
            .filter(|j| !oracle_keep.contains(j))
            .map(|j| w.at(i, j) * w.at(i, j))
            .sum();
        assert!((dropped - oracle_dropped).abs() < 1e-12, "row {i} not optimal");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projected_rows_meet_cardinality(seed in any::<u64>(), s in 1usize..6) {
        let mut rng = Rng::new(seed);
        let w = random_matrix(6, 8, 1.0, &mut rng);
        let p = project_topk(&w, &row_con(s)).unwrap();
        for i in 0..6 {
            prop_assert!(row_support(&p, i).len() <= s);
        }
        // Idempotence under the property inputs too.
        let q = project_topk(&p, &row_con(s)).unwrap();
        prop_assert_eq!(&p.data, &q.data);
    }

    #[test]
    fn projected_columns_meet_cardinality(seed in any::<u64>(), s in 1usize..6) {
        let mut rng = Rng::new(seed);
        let w = random_matrix(8, 6, 1.0, &mut rng);
        let p = project_topk(&w, &col_con(s)).unwrap();
        for j in 0..6 {
            prop_assert!(col_support(&p, j).len() <= s);
        }
    }
}

#[test]
fn model_projection_projects_every_constrained_tensor() {
    let mut rng = Rng::new(46);
    // Dense unprojected factorized model: every tensor starts infeasible.
    let mut model = random_model(Arch::Ddse, 10, 14, 2, 3, 4, true, 0.0, &mut rng);
    let before = check_constraints(&model).unwrap();
    assert!(!before.pass, "random dense model should violate constraints");
    project_model(&mut model).unwrap();
    let after = check_constraints(&model).unwrap();
    assert!(after.pass, "projection left violations:\n{after}");
    // w1 and each w3 are row-constrained, each w2 column-constrained.
    for i in 0..model.w1.rows {
        assert!(row_support(&model.w1, i).len() <= 3);
    }
    for w2 in &model.w2_list {
        for j in 0..w2.cols {
            assert!(col_support(w2, j).len() <= 3);
        }
    }
    for w3 in &model.w3_list {
        for i in 0..w3.rows {
            assert!(row_support(w3, i).len() <= 3);
        }
    }
    // Head and thresholds are untouched by projection.
    assert!(model.head_weight.data.iter().any(|&v| v != 0.0));
}

#[test]
fn model_projection_is_noop_for_free_architectures() {
    let mut rng = Rng::new(47);
    for arch in [Arch::Lista, Arch::FcPlain, Arch::FcDropout, Arch::FcDropconnect] {
        let mut model = random_model(arch, 8, 10, 1, 3, 4, false, 0.3, &mut rng);
        let before = model.clone();
        project_model(&mut model).unwrap();
        assert_eq!(model, before, "{:?} was modified", arch);
        assert!(check_constraints(&model).is_err());
    }
}

#[test]
fn check_constraints_reports_worst_slice() {
    let mut rng = Rng::new(48);
    let mut model = random_model(Arch::NoShortcut, 6, 8, 1, 2, 3, true, 0.0, &mut rng);
    project_model(&mut model).unwrap();
    // Corrupt one w2 column past the limit and verify the report pinpoints it.
    for i in 0..model.w2_list[0].rows {
        model.w2_list[0].set(i, 3, 1.0);
    }
    let report = check_constraints(&model).unwrap();
    assert!(!report.pass);
    let bad = report
        .checks
        .iter()
        .find(|c| c.tensor == "w2[0]")
        .expect("w2[0] check present");
    assert!(!bad.pass);
    assert_eq!(bad.worst_slice, 3);
    assert_eq!(bad.max_count, model.w2_list[0].rows);
    assert_eq!(bad.limit, 2);
    let display = report.to_string();
    assert!(display.contains("FAIL"), "display output: {display}");
}

#[test]
fn projection_after_projection_reports_zero_slack() {
    let mut rng = Rng::new(49);
    let mut model = random_model(Arch::Ddse, 9, 12, 2, 4, 5, false, 0.0, &mut rng);
    project_model(&mut model).unwrap();
    let snapshot = model.clone();
    project_model(&mut model).unwrap();
    assert_eq!(model, snapshot, "second projection changed a tensor");
}
