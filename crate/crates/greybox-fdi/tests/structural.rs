//! Random-model agreement between the structural algorithms and the
//! brute-force oracles, plus serialization properties over the same
//! generator.

mod common;

use std::collections::BTreeSet;

use greybox_fdi::causal::{build_comp_graph, extract_state_space, Causality};
use greybox_fdi::dm::{dm_decompose, maximum_matching, overdetermined_part, redundancy};
use greybox_fdi::model::{parse_model, serialize_model, EqId, VarId};
use greybox_fdi::mso::{find_msos, is_mso};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn matching_cardinality_agrees_with_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let model = common::random_model(&mut rng);
        let sub = model.all_equations();
        let a = common::adjacency(&sub);
        let expect = common::brute_matching_size(&a.adj, a.vars.len().max(1));
        assert_eq!(maximum_matching(&sub).len(), expect);
    }
}

#[test]
fn dm_parts_agree_with_leave_one_out_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for case in 0..100 {
        let model = common::random_model(&mut rng);
        let sub = model.all_equations();
        let dm = dm_decompose(&sub);
        let oracle = common::oracle_dm(&sub);
        let set = |v: &[EqId]| v.iter().copied().collect::<BTreeSet<_>>();
        let vset = |v: &[VarId]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(set(&dm.over_eqs), oracle.over_eqs, "case {case}");
        assert_eq!(vset(&dm.over_vars), oracle.over_vars, "case {case}");
        assert_eq!(set(&dm.exact_eqs), oracle.exact_eqs, "case {case}");
        assert_eq!(vset(&dm.exact_vars), oracle.exact_vars, "case {case}");
        assert_eq!(set(&dm.under_eqs), oracle.under_eqs, "case {case}");
        assert_eq!(vset(&dm.under_vars), oracle.under_vars, "case {case}");
        assert_eq!(redundancy(&sub), oracle.redundancy, "case {case}");
    }
}

#[test]
fn overdetermined_part_matches_oracle_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..100 {
        let model = common::random_model(&mut rng);
        let sub = model.all_equations();
        let over = overdetermined_part(&sub);
        let oracle = common::oracle_dm(&sub);
        assert_eq!(over.equation_set(), oracle.over_eqs);
        let again = overdetermined_part(&over);
        assert_eq!(again.equations(), over.equations());
        assert_eq!(redundancy(&over), redundancy(&sub));
    }
}

#[test]
fn mso_enumeration_is_complete_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for case in 0..100 {
        let model = common::random_model(&mut rng);
        let got: BTreeSet<BTreeSet<EqId>> = find_msos(&model)
            .unwrap()
            .into_iter()
            .map(|m| m.equations)
            .collect();
        let expect = common::oracle_msos(&model);
        assert_eq!(got, expect, "case {case}");
        for eqs in &got {
            let sub = model.submodel(eqs).unwrap();
            assert!(is_mso(&sub));
        }
    }
}

#[test]
fn zero_block_structure_holds_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..100 {
        let model = common::random_model(&mut rng);
        let sub = model.all_equations();
        let dm = dm_decompose(&sub);
        let x0: BTreeSet<VarId> = dm.exact_vars.iter().copied().collect();
        let xm: BTreeSet<VarId> = dm.under_vars.iter().copied().collect();
        for &e in &dm.over_eqs {
            for v in sub.unknowns_of(e) {
                assert!(!x0.contains(&v) && !xm.contains(&v));
            }
        }
        for &e in &dm.exact_eqs {
            for v in sub.unknowns_of(e) {
                assert!(!xm.contains(&v));
            }
        }
    }
}

#[test]
fn matching_size_is_invariant_under_declaration_order() {
    // the same structure written in reversed declaration order
    let forward = parse_model(
        "@variables\nx unknown\nw unknown\nz known\n@equations\ne1 : x z\ne2 : x w\ne3 : w\n",
    )
    .unwrap();
    let reversed = parse_model(
        "@variables\nw unknown\nx unknown\nz known\n@equations\ne3 : w\ne2 : x w\ne1 : x z\n",
    )
    .unwrap();
    assert_eq!(
        maximum_matching(&forward.all_equations()).len(),
        maximum_matching(&reversed.all_equations()).len()
    );
}

#[test]
fn serialization_roundtrips_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    for _ in 0..200 {
        let model = common::random_model(&mut rng);
        let text = serialize_model(&model);
        let parsed = parse_model(&text).expect("serialized model reparses");
        assert_eq!(model, parsed);
    }
}

#[test]
fn submodel_induced_variables_match_set_union_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    for _ in 0..100 {
        let model = common::random_model(&mut rng);
        let all: Vec<EqId> = model.equation_ids().collect();
        if all.is_empty() {
            continue;
        }
        use rand::Rng;
        let subset: BTreeSet<EqId> = all
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.6))
            .collect();
        let sub = model.submodel(&subset).unwrap();
        let mut expect = BTreeSet::new();
        for &e in &subset {
            for &v in model.incident(e) {
                if model.variable(v).kind.is_unknown() {
                    expect.insert(v);
                }
            }
        }
        let got: BTreeSet<VarId> = sub.unknowns().into_iter().collect();
        assert_eq!(got, expect);
    }
}

#[test]
fn remainder_matchings_of_random_msos_are_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut seen_msos = 0;
    for _ in 0..200 {
        let model = common::random_model(&mut rng);
        let msos = find_msos(&model).unwrap();
        let links = model.link_equations();
        for mso in &msos {
            seen_msos += 1;
            for &eq in mso.equations.iter().filter(|e| !links.contains(e)) {
                let graph = match build_comp_graph(mso, eq, &model) {
                    Ok(g) => g,
                    // algebraic loops are a legitimate rejection
                    Err(greybox_fdi::causal::CausalError::AlgebraicLoop(_)) => continue,
                    Err(other) => panic!("unexpected error: {other}"),
                };
                // perfect matching of the remainder
                assert_eq!(graph.matching.len(), mso.equations.len() - 1);
                // every integral sensor-residual graph yields a structure
                let is_sensor = model.measured_variable(eq).is_some();
                if graph.causality() == Causality::Integral && is_sensor {
                    let s = extract_state_space(&graph, &model).unwrap();
                    assert_eq!(s.states.len(), graph.integration_nodes.len());
                    for args in s.g_args.iter().chain(std::iter::once(&s.h_args)) {
                        for &arg in args {
                            match arg {
                                greybox_fdi::causal::Arg::State(i) => assert!(i < s.states.len()),
                                greybox_fdi::causal::Arg::Input(i) => assert!(i < s.inputs.len()),
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(seen_msos > 20, "generator produced too few MSO sets: {seen_msos}");
}

#[test]
fn causality_classes_partition_all_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut counts = [0usize; 4];
    for _ in 0..200 {
        let model = common::random_model(&mut rng);
        let msos = find_msos(&model).unwrap();
        let links = model.link_equations();
        for mso in &msos {
            for &eq in mso.equations.iter().filter(|e| !links.contains(e)) {
                if let Ok(graph) = build_comp_graph(mso, eq, &model) {
                    match graph.causality() {
                        Causality::Integral => counts[0] += 1,
                        Causality::Derivative => counts[1] += 1,
                        Causality::Mixed => counts[2] += 1,
                        Causality::Algebraic => counts[3] += 1,
                    }
                }
            }
        }
    }
    // the generator must exercise algebraic and integral classes at least
    assert!(counts[0] > 0, "no integral graphs seen");
    assert!(counts[3] > 0, "no algebraic graphs seen");
}
